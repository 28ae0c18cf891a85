#pragma once

#include "quantgrid/autodiff.hpp"
#include "quantgrid/graphs.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace qg_test {

using quantgrid::Index;
using quantgrid::Shape;
using quantgrid::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Row-stochastic diffusion powers of a random geometric graph.
inline quantgrid::DiffusionOperator random_diffusion(Index nodes, int order, std::mt19937_64& rng) {
  Eigen::MatrixXd coords = random_matrix(nodes, 2, rng) * 2.0;
  const auto adj = quantgrid::gaussian_adjacency(coords, 2.0, 0.05);
  return quantgrid::diffusion_powers(quantgrid::normalize(adj), order);
}

/// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("quantgrid_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace qg_test
