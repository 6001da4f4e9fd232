#pragma once

#include "healthygan/image_io.hpp"
#include "healthygan/rng.hpp"
#include "healthygan/tensor.hpp"

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace healthygan {

enum class Label { healthy, anomalous };

struct SampleRecord {
  std::string path;               // relative to the dataset root
  std::optional<Label> label;     // never present for training splits
  std::string gt_mask_path;       // empty when absent; relative to the root
};

/// Synthetic benchmark layout. n_val and n_test are per-class counts, so the
/// val split holds n_val healthy plus n_val anomalous images.
struct DatasetSpec {
  Index image_size = 64;
  Index channels = 1;
  Index n_healthy_B = 400;
  Index n_mixed_healthy_A = 140;
  Index n_mixed_anomalous_A = 60;
  Index n_val = 40;
  Index n_test = 60;
  Index lesion_min = 8;
  Index lesion_max = 16;
  double lesion_contrast = 0.35;
  std::uint64_t seed = 0;

  void validate() const {
    if (image_size < 64 || image_size % 64 != 0)
      throw std::invalid_argument("dataset: image_size must be a positive multiple of 64");
    if (channels != 1 && channels != 3)
      throw std::invalid_argument("dataset: channels must be 1 or 3");
    if (n_healthy_B < 1 || n_mixed_healthy_A < 1 || n_val < 1 || n_test < 1)
      throw std::invalid_argument("dataset: counts must be positive");
    if (n_mixed_anomalous_A < 0)
      throw std::invalid_argument("dataset: anomalous count cannot be negative");
    if (lesion_min < 1 || lesion_min > lesion_max || lesion_max >= image_size / 2)
      throw std::invalid_argument("dataset: lesion size range must lie in (0, image_size/2)");
    if (lesion_contrast <= 0.0 || lesion_contrast > 1.0)
      throw std::invalid_argument("dataset: lesion_contrast must be in (0, 1]");
  }
};

enum class Split { trainA, trainB, val, test };

const char* split_name(Split s);

/// Writes root/{trainA,trainB,val,test}/ images, gt masks for anomalous
/// val/test samples, and one manifest CSV per split. Pure function of the
/// spec: reruns are byte-identical.
void generate_synthetic_benchmark(const DatasetSpec& spec, const std::string& root);

/// Reads a split's manifest (or falls back to scanning PNG files). Records
/// come back sorted by path; labels are only ever populated for val/test.
std::vector<SampleRecord> load_split(const std::string& root, Split split);

/// Linear [0,255] -> [-1,1].
template <typename S>
inline S normalize_u8(std::uint8_t v) {
  return static_cast<S>(v) / S(127.5) - S(1);
}

/// Inverse of normalize_u8 with clamping and round-to-nearest.
template <typename S>
inline std::uint8_t denormalize_u8(S x) {
  const double v = (static_cast<double>(x) + 1.0) * 127.5;
  const double clamped = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
  return static_cast<std::uint8_t>(std::lround(clamped));
}

/// Decoded image resized and normalized into a (1,C,H,W) tensor. Grayscale
/// files are replicated across RGB channels and vice versa averaged, so model
/// channel count and file channel count are independent.
template <typename S>
Tensor<S> normalize_image(const ImageU8& src, Index channels, Index image_size) {
  ImageU8 img = resize_bilinear(src, image_size, image_size);
  Tensor<S> t({1, channels, image_size, image_size});
  for (Index y = 0; y < image_size; ++y)
    for (Index x = 0; x < image_size; ++x) {
      if (img.channels == channels) {
        for (Index c = 0; c < channels; ++c)
          t.at4(0, c, y, x) = normalize_u8<S>(img.at(y, x, c));
      } else if (img.channels == 1) {
        const S v = normalize_u8<S>(img.at(y, x, 0));
        for (Index c = 0; c < channels; ++c) t.at4(0, c, y, x) = v;
      } else {
        double sum = 0;
        for (Index c = 0; c < img.channels; ++c) sum += img.at(y, x, c);
        const S v = normalize_u8<S>(
            static_cast<std::uint8_t>(std::lround(sum / static_cast<double>(img.channels))));
        t.at4(0, 0, y, x) = v;
      }
    }
  return t;
}

template <typename S>
Tensor<S> load_normalized_image(const std::string& root, const std::string& rel_path,
                                Index channels, Index image_size) {
  return normalize_image<S>(read_png(root + "/" + rel_path), channels, image_size);
}

/// Binary ground-truth mask as a (1,1,H,W) tensor of {0,1}.
template <typename S>
Tensor<S> load_mask(const std::string& root, const std::string& rel_path, Index image_size) {
  ImageU8 img = read_png(root + "/" + rel_path);
  if (img.height != image_size || img.width != image_size)
    throw std::runtime_error("dataset: mask size mismatch for " + rel_path);
  Tensor<S> t({1, 1, image_size, image_size});
  for (Index y = 0; y < image_size; ++y)
    for (Index x = 0; x < image_size; ++x)
      t.at4(0, 0, y, x) = img.at(y, x, 0) >= 128 ? S(1) : S(0);
  return t;
}

/// Decoded-image cache over one split; sampling draws with replacement.
template <typename S>
class CachedSet {
 public:
  CachedSet(std::string root, std::vector<SampleRecord> records, Index channels, Index image_size)
      : root_(std::move(root)),
        records_(std::move(records)),
        channels_(channels),
        image_size_(image_size),
        cache_(records_.size()) {
    if (records_.empty()) throw std::invalid_argument("dataset: empty sample set");
  }

  Index size() const { return static_cast<Index>(records_.size()); }
  const std::vector<SampleRecord>& records() const { return records_; }

  const Tensor<S>& image(Index i) {
    auto& slot = cache_.at(static_cast<size_t>(i));
    if (!slot)
      slot = load_normalized_image<S>(root_, records_[static_cast<size_t>(i)].path, channels_,
                                      image_size_);
    return *slot;
  }

  /// Batch of rows drawn uniformly with replacement.
  Tensor<S> sample_batch(Index batch, Rng& rng) {
    Tensor<S> out({batch, channels_, image_size_, image_size_});
    const Index per = channels_ * image_size_ * image_size_;
    for (Index i = 0; i < batch; ++i) {
      const Index idx = rng.uniform_index(size());
      out.data.segment(i * per, per) = image(idx).data;
    }
    return out;
  }

  /// All images stacked in record order.
  Tensor<S> all() {
    Tensor<S> out({size(), channels_, image_size_, image_size_});
    const Index per = channels_ * image_size_ * image_size_;
    for (Index i = 0; i < size(); ++i) out.data.segment(i * per, per) = image(i).data;
    return out;
  }

 private:
  std::string root_;
  std::vector<SampleRecord> records_;
  Index channels_, image_size_;
  std::vector<std::optional<Tensor<S>>> cache_;
};

/// Independent with-replacement batches from two unpaired sets.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> sample_unpaired_batch(CachedSet<S>& set_a, CachedSet<S>& set_b,
                                                      Index batch, Rng& rng) {
  if (batch < 1) throw std::invalid_argument("dataset: batch_size must be >= 1");
  Tensor<S> a = set_a.sample_batch(batch, rng);
  Tensor<S> b = set_b.sample_batch(batch, rng);
  return {std::move(a), std::move(b)};
}

}  // namespace healthygan
