#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "groundlm/autograd.hpp"

namespace glm::test {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("glm_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& x : t.values()) x = static_cast<Real>(n(rng));
  return t;
}

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst;  // parameter[index] with the largest error
  std::size_t checked = 0;
};

// Central differences on every element of every parameter. The relative
// error of an element is |a - n| / max(|a|, |n|, floor). The floor sits above
// central-difference rounding noise, roughly eps * |loss| / h.
inline GradCheckResult check_gradients(const std::function<Var(Graph&)>& loss_fn,
                                       const std::vector<Parameter*>& params, double h = 1e-5,
                                       double floor = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var loss = loss_fn(g);
    g.backward(loss);
  }
  auto eval = [&] {
    Graph g(false);
    return static_cast<double>(loss_fn(g).value().item());
  };
  GradCheckResult r;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const Real saved = p->value[i];
      p->value[i] = static_cast<Real>(saved + h);
      const double up = eval();
      p->value[i] = static_cast<Real>(saved - h);
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.empty() ? 0.0 : static_cast<double>(p->grad[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace glm::test
