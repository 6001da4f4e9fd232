#include "healthygan/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace healthygan {

const char* split_name(Split s) {
  switch (s) {
    case Split::trainA: return "trainA";
    case Split::trainB: return "trainB";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw std::logic_error("unreachable split");
}

namespace {

constexpr std::uint64_t kStreamTrainB = 11, kStreamTrainA = 12, kStreamVal = 13,
                        kStreamTest = 14, kStreamShuffle = 15;

constexpr double kTau = 6.283185307179586476925286766559;

/// Smooth sinusoidal texture plus an axis-aligned elliptical bright region,
/// quantized to 8 bits. All parameters come from the per-sample rng.
ImageU8 synth_background(Rng& rng, Index size) {
  const double fx = 1.0 + 2.0 * rng.uniform();
  const double fy = 1.0 + 2.0 * rng.uniform();
  const double px = rng.uniform();
  const double py = rng.uniform();
  const double cx = size * (0.5 + 0.12 * (rng.uniform() - 0.5));
  const double cy = size * (0.5 + 0.12 * (rng.uniform() - 0.5));
  const double ax = size * (0.22 + 0.10 * rng.uniform());
  const double ay = size * (0.22 + 0.10 * rng.uniform());
  const double organ = 30.0 + 30.0 * rng.uniform();

  ImageU8 img;
  img.height = size;
  img.width = size;
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(size * size));
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      double v = 90.0 + 25.0 * std::sin(kTau * (fx * x / size + px)) *
                            std::sin(kTau * (fy * y / size + py));
      const double ex = (x - cx) / ax, ey = (y - cy) / ay;
      if (ex * ex + ey * ey <= 1.0) v += organ;
      v = std::clamp(v, 0.0, 255.0);
      img.at(y, x, 0) = static_cast<std::uint8_t>(std::lround(v));
    }
  return img;
}

struct Lesion {
  Index x0, y0, side;
};

/// One bright square, fully inside the frame, brightened additively with
/// clipping; the mask marks exactly the altered square.
Lesion inject_lesion(Rng& rng, ImageU8& img, const DatasetSpec& spec) {
  const Index side = spec.lesion_min + rng.uniform_index(spec.lesion_max - spec.lesion_min + 1);
  const Index x0 = rng.uniform_index(spec.image_size - side + 1);
  const Index y0 = rng.uniform_index(spec.image_size - side + 1);
  const int delta = static_cast<int>(std::lround(spec.lesion_contrast * 255.0));
  for (Index y = y0; y < y0 + side; ++y)
    for (Index x = x0; x < x0 + side; ++x)
      img.at(y, x, 0) = static_cast<std::uint8_t>(std::min(255, img.at(y, x, 0) + delta));
  return {x0, y0, side};
}

ImageU8 lesion_mask(const Lesion& l, Index size) {
  ImageU8 m;
  m.height = size;
  m.width = size;
  m.channels = 1;
  m.pixels.assign(static_cast<size_t>(size * size), 0);
  for (Index y = l.y0; y < l.y0 + l.side; ++y)
    for (Index x = l.x0; x < l.x0 + l.side; ++x) m.at(y, x, 0) = 255;
  return m;
}

ImageU8 to_channels(const ImageU8& gray, Index channels) {
  if (channels == 1) return gray;
  ImageU8 rgb;
  rgb.height = gray.height;
  rgb.width = gray.width;
  rgb.channels = 3;
  rgb.pixels.resize(gray.pixels.size() * 3);
  for (size_t i = 0; i < gray.pixels.size(); ++i)
    rgb.pixels[3 * i] = rgb.pixels[3 * i + 1] = rgb.pixels[3 * i + 2] = gray.pixels[i];
  return rgb;
}

std::string index_name(const char* stem, Index i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05lld.png", stem, static_cast<long long>(i));
  return buf;
}

void write_manifest(const std::string& root, Split split, std::vector<SampleRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.path < b.path; });
  const std::string path = root + "/" + split_name(split) + ".csv";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot write manifest " + path);
  out << "path,label,gt_mask_path\n";
  for (const auto& r : records) {
    const char* label = !r.label ? "" : (*r.label == Label::healthy ? "healthy" : "anomalous");
    out << r.path << ',' << label << ',' << r.gt_mask_path << '\n';
  }
  if (!out) throw std::runtime_error("dataset: write failed for " + path);
}

/// A mixed split: per-sample determinism comes from seeding on the sample
/// index, and the class layout from a single dedicated shuffle stream.
std::vector<SampleRecord> emit_mixed_split(const DatasetSpec& spec, const std::string& root,
                                           Split split, std::uint64_t stream, Index n_healthy,
                                           Index n_anomalous, bool labeled, bool with_masks) {
  const std::string dir = std::string(split_name(split));
  std::vector<bool> anomalous(static_cast<size_t>(n_healthy + n_anomalous), false);
  for (Index i = 0; i < n_anomalous; ++i) anomalous[static_cast<size_t>(n_healthy + i)] = true;
  Rng shuffle_rng(derive_seed(spec.seed, kStreamShuffle + stream * 100));
  for (size_t i = anomalous.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(shuffle_rng.uniform_index(static_cast<Index>(i)));
    std::swap(anomalous[i - 1], anomalous[j]);
  }

  std::vector<SampleRecord> records;
  for (Index i = 0; i < n_healthy + n_anomalous; ++i) {
    Rng rng(derive_seed(derive_seed(spec.seed, stream), static_cast<std::uint64_t>(i)));
    ImageU8 img = synth_background(rng, spec.image_size);
    SampleRecord rec;
    rec.path = dir + "/" + index_name("sample", i);
    if (anomalous[static_cast<size_t>(i)]) {
      Lesion l = inject_lesion(rng, img, spec);
      if (with_masks) {
        rec.gt_mask_path = dir + "/masks/" + index_name("mask", i);
        write_png(root + "/" + rec.gt_mask_path, lesion_mask(l, spec.image_size));
      }
      if (labeled) rec.label = Label::anomalous;
    } else if (labeled) {
      rec.label = Label::healthy;
    }
    write_png(root + "/" + rec.path, to_channels(img, spec.channels));
    records.push_back(std::move(rec));
  }
  return records;
}

std::optional<Label> parse_label(const std::string& text, const std::string& context) {
  if (text.empty()) return std::nullopt;
  if (text == "healthy") return Label::healthy;
  if (text == "anomalous") return Label::anomalous;
  throw std::runtime_error("dataset: bad label '" + text + "' in " + context);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

void generate_synthetic_benchmark(const DatasetSpec& spec, const std::string& root) {
  spec.validate();
  std::error_code ec;
  for (const char* d : {"trainA", "trainB", "val", "val/masks", "test", "test/masks"}) {
    fs::create_directories(fs::path(root) / d, ec);
    if (ec) throw std::runtime_error("dataset: cannot create " + root + "/" + d);
  }

  std::vector<SampleRecord> train_b;
  for (Index i = 0; i < spec.n_healthy_B; ++i) {
    Rng rng(derive_seed(derive_seed(spec.seed, kStreamTrainB), static_cast<std::uint64_t>(i)));
    ImageU8 img = synth_background(rng, spec.image_size);
    SampleRecord rec;
    rec.path = std::string("trainB/") + index_name("sample", i);
    write_png(root + "/" + rec.path, to_channels(img, spec.channels));
    train_b.push_back(std::move(rec));
  }
  write_manifest(root, Split::trainB, train_b);

  write_manifest(root, Split::trainA,
                 emit_mixed_split(spec, root, Split::trainA, kStreamTrainA,
                                  spec.n_mixed_healthy_A, spec.n_mixed_anomalous_A,
                                  /*labeled=*/false, /*with_masks=*/false));
  write_manifest(root, Split::val,
                 emit_mixed_split(spec, root, Split::val, kStreamVal, spec.n_val, spec.n_val,
                                  /*labeled=*/true, /*with_masks=*/true));
  write_manifest(root, Split::test,
                 emit_mixed_split(spec, root, Split::test, kStreamTest, spec.n_test, spec.n_test,
                                  /*labeled=*/true, /*with_masks=*/true));
}

std::vector<SampleRecord> load_split(const std::string& root, Split split) {
  const bool training_split = split == Split::trainA || split == Split::trainB;
  const std::string manifest = root + "/" + split_name(split) + ".csv";
  std::vector<SampleRecord> records;

  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("dataset: cannot open " + manifest);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("dataset: empty manifest " + manifest);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    int path_col = -1, label_col = -1, mask_col = -1;
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == "path") path_col = static_cast<int>(i);
      else if (header[i] == "label") label_col = static_cast<int>(i);
      else if (header[i] == "gt_mask_path") mask_col = static_cast<int>(i);
      else throw std::runtime_error("dataset: unknown manifest column '" + header[i] + "'");
    }
    if (path_col < 0) throw std::runtime_error("dataset: manifest lacks a path column");

    size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != header.size())
        throw std::runtime_error("dataset: malformed manifest row " + std::to_string(line_no) +
                                 " in " + manifest);
      SampleRecord rec;
      rec.path = cells[static_cast<size_t>(path_col)];
      if (rec.path.empty())
        throw std::runtime_error("dataset: empty path at row " + std::to_string(line_no));
      if (label_col >= 0 && !training_split)
        rec.label = parse_label(cells[static_cast<size_t>(label_col)], manifest);
      if (mask_col >= 0) rec.gt_mask_path = cells[static_cast<size_t>(mask_col)];
      records.push_back(std::move(rec));
    }
  } else {
    const fs::path dir = fs::path(root) / split_name(split);
    if (!fs::is_directory(dir))
      throw std::runtime_error("dataset: missing split directory " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
      SampleRecord rec;
      rec.path = std::string(split_name(split)) + "/" + entry.path().filename().string();
      records.push_back(std::move(rec));
    }
  }

  if (records.empty())
    throw std::runtime_error(std::string("dataset: no samples in split ") + split_name(split));
  std::sort(records.begin(), records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.path < b.path; });
  return records;
}

}  // namespace healthygan
