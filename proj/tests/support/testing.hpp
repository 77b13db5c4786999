#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>

#include "tfwt/data_io.hpp"
#include "tfwt/nn.hpp"
#include "tfwt/rng.hpp"
#include "tfwt/weighting.hpp"

namespace tfwt::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "param[i]"
  std::size_t checked = 0;
  std::size_t nonzero = 0;  // entries with a non-negligible gradient
};

/// Central differences against reverse mode for every entry of every param.
/// The relative error uses max(|analytic|, |numeric|) as the denominator;
/// entries where both are below `floor` are counted but cannot fail.
inline GradCheck check_gradients(const ParamList& params, const std::function<Tensor(Tape&)>& loss_fn,
                                 double h = 1e-5, double floor = 1e-10) {
  for (const auto& p : params) Tensor(p.value).set_requires_grad(true);
  zero_grads(params);
  {
    Tape t;
    Tensor loss = loss_fn(t);
    t.backward(loss);
  }
  GradCheck out;
  for (const auto& p : params) {
    Tensor v = p.value;
    const auto g = v.grad_view();
    std::vector<double> analytic(g.begin(), g.end());
    auto data = v.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      Tape t;
      t.set_grad_enabled(false);
      data[i] = keep + h;
      const double up = loss_fn(t).item();
      t.clear();
      data[i] = keep - h;
      const double down = loss_fn(t).item();
      data[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      ++out.checked;
      if (scale < floor) continue;
      ++out.nonzero;
      const double rel = std::abs(a - numeric) / scale;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  zero_grads(params);
  return out;
}

/// Mixed-type dataset: `m` discrete columns with 3 categories, then k - m
/// standard-normal columns; binary label from a noisy linear score.
inline Dataset mixed_dataset(std::size_t n, std::size_t k, std::size_t m, std::uint64_t seed) {
  Rng rng("mixed-dataset", seed);
  std::string csv;
  for (std::size_t c = 0; c < k; ++c) csv += (c ? ",f" : "f") + std::to_string(c);
  csv += ",y\n";
  std::vector<ColumnSpec> cols;
  for (std::size_t c = 0; c < k; ++c)
    cols.push_back({"f" + std::to_string(c), c < m ? ColumnKind::discrete : ColumnKind::continuous});
  cols.push_back({"y", ColumnKind::label});
  const char* cats[] = {"a", "b", "c"};
  for (std::size_t i = 0; i < n; ++i) {
    double score = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (c) csv += ",";
      if (c < m) {
        // Cycle categories first so every one appears even in tiny samples.
        const std::size_t v = i < 3 ? i : rng.index(3);
        csv += cats[v];
        score += static_cast<double>(v) - 1.0;
      } else {
        const double x = rng.normal();
        csv += std::to_string(x);
        score += (c % 2 ? 1.0 : -0.5) * x;
      }
    }
    // Alternate the first labels so both classes are present.
    const int y = i < 2 ? static_cast<int>(i) : (score + 0.5 * rng.normal() > 0 ? 1 : 0);
    csv += y ? ",pos\n" : ",neg\n";
  }
  return parse_csv(csv, Schema(cols));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tfwt_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double population_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace tfwt::testing
