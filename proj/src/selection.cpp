#include "healthygan/selection.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace healthygan {

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("frechet: eigendecomposition did not converge");
  Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const FeatureStats& s1, const FeatureStats& s2) {
  if (s1.mean.size() != s2.mean.size())
    throw std::invalid_argument("frechet: dimension mismatch");
  const Eigen::Index d = s1.mean.size();
  const Eigen::MatrixXd c1 = 0.5 * (s1.covariance + s1.covariance.transpose());
  const Eigen::MatrixXd c2 = 0.5 * (s2.covariance + s2.covariance.transpose());
  const double mean_term = (s1.mean - s2.mean).squaredNorm();

  // The trace of sqrtm(c1 c2) equals the trace of sqrtm(s c2 s) with
  // s = sqrtm(c1), and the latter matrix is symmetric PSD up to rounding.
  // Negative eigenvalues of the symmetrized product play the role of the
  // imaginary residue: tiny ones are clamped, larger ones trigger diagonal
  // jitter, and persistent ones are an error.
  double jitter = 0.0;
  for (int attempt = 0; attempt < 4; ++attempt) {
    const Eigen::MatrixXd j = jitter * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd c1j = c1 + j, c2j = c2 + j;
    const Eigen::MatrixXd s = psd_sqrt(c1j);
    Eigen::MatrixXd prod = s * c2j * s;
    prod = 0.5 * (prod + prod.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(prod);
    if (eig.info() == Eigen::Success) {
      const Eigen::VectorXd lam = eig.eigenvalues();
      const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
      if (lam.minCoeff() >= -1e-8 * scale) {
        const double tr_sqrt = lam.cwiseMax(0.0).cwiseSqrt().sum();
        const double fid = mean_term + c1j.trace() + c2j.trace() - 2.0 * tr_sqrt;
        return std::max(0.0, fid);
      }
    }
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
  }
  throw std::runtime_error("frechet: matrix square root failed after jitter escalation");
}

void write_selection_report(const std::string& path, const SelectionResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("selection: cannot write report " + path);
  out << "checkpoint_path,iteration,fid,selected\n";
  char buf[64];
  for (const auto& s : result.scores) {
    if (s.ok)
      std::snprintf(buf, sizeof(buf), "%.17g", s.fid);
    else
      std::snprintf(buf, sizeof(buf), "failed");
    out << s.path << ',' << s.iteration << ',' << buf << ',' << (s.selected ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("selection: write failed for " + path);
}

}  // namespace healthygan
