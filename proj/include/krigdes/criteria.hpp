#pragma once

// Design criteria: GV (log det of the kriging covariance), G (max kriging variance),
// V (mean kriging variance), MES (log det C_xi), and relative efficiencies.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "krigdes/design_space.hpp"
#include "krigdes/error.hpp"
#include "krigdes/kriging.hpp"
#include "krigdes/linalg.hpp"

namespace krigdes {

enum class Criterion { kGV, kG, kV, kMES };

inline std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::kGV: return "gv";
    case Criterion::kG: return "g";
    case Criterion::kV: return "v";
    case Criterion::kMES: return "mes";
  }
  return "";
}

inline Criterion parse_criterion(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "gv") return Criterion::kGV;
  if (lower == "g") return Criterion::kG;
  if (lower == "v") return Criterion::kV;
  if (lower == "mes") return Criterion::kMES;
  throw ConfigError("unknown criterion '" + std::string(s) + "' (expected gv, g, v or mes)");
}

/// MES is maximized; the others are minimized.
inline bool maximized(Criterion c) { return c == Criterion::kMES; }

struct CriterionValue {
  Criterion kind = Criterion::kGV;
  double value = 0;
  bool log_scale = true;
  Index m = 0;  // number of prediction sites (GV/G/V) or design size (MES)

  /// GV evaluated to -inf: zero-volume kriging covariance (e.g. duplicated points).
  bool degenerate() const { return std::isinf(value) && value < 0; }

  /// exp(logdet / m): per-site value that does not grow with m.
  double scale_free() const { return log_scale ? std::exp(value / static_cast<double>(m)) : value; }
};

inline CriterionValue gv_value(const Eigen::MatrixXd& sigma) {
  return {Criterion::kGV, logdet_psd(sigma), true, static_cast<Index>(sigma.rows())};
}

inline CriterionValue g_value(const Eigen::VectorXd& variances) {
  if (variances.size() == 0) throw ConfigError("g_value: no prediction sites");
  return {Criterion::kG, variances.maxCoeff(), false, static_cast<Index>(variances.size())};
}

inline CriterionValue v_value(const Eigen::VectorXd& variances) {
  if (variances.size() == 0) throw ConfigError("v_value: no prediction sites");
  return {Criterion::kV, variances.mean(), false, static_cast<Index>(variances.size())};
}

inline CriterionValue mes_value(const KrigingSystem& sys) {
  if (sys.jitter() > 0) throw NumericalError("mes_value: C_xi is singular");
  return {Criterion::kMES, sys.logdet_C(), true, static_cast<Index>(sys.k())};
}

/// Full evaluation of one criterion on a design, predicting every non-design candidate.
inline CriterionValue evaluate(const Instance& inst, const Design& design, Criterion c) {
  KrigingSystem sys(inst, design.indices());
  IndexList targets = complement(design, inst.size());
  switch (c) {
    case Criterion::kGV: return gv_value(sys.kriging_cov(targets));
    case Criterion::kG: return g_value(sys.kriging_variances(targets));
    case Criterion::kV: return v_value(sys.kriging_variances(targets));
    case Criterion::kMES: return mes_value(sys);
  }
  return {};
}

/// E = Phi(opt) / Phi(design) on the natural scale; for GV the functional is sqrt|Sigma|.
inline double relative_efficiency(const CriterionValue& opt, const CriterionValue& design) {
  if (opt.kind != design.kind) throw ConfigError("relative_efficiency: criterion kinds differ");
  switch (opt.kind) {
    case Criterion::kGV:
      if (opt.degenerate() && design.degenerate()) return 1.0;
      return std::exp(0.5 * (opt.value - design.value));
    case Criterion::kMES:
      return std::exp(0.5 * (design.value - opt.value));
    case Criterion::kG:
    case Criterion::kV:
      if (design.value == 0) return opt.value == 0 ? 1.0 : 0.0;
      return opt.value / design.value;
  }
  return 0;
}

/// Tolerance used for tie detection between criterion values.
inline bool same_value(double a, double b, double rel = 1e-9) {
  if (a == b) return true;
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Orientation-aware "strictly better" with tie tolerance.
inline bool strictly_better(double candidate, double incumbent, Criterion c, double rel = 1e-9) {
  if (same_value(candidate, incumbent, rel)) return false;
  return maximized(c) ? candidate > incumbent : candidate < incumbent;
}

}  // namespace krigdes
