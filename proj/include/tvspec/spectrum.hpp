#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tvspec/compound.hpp"
#include "tvspec/evolution.hpp"
#include "tvspec/matrix_sequence.hpp"

namespace tvspec {

enum class Side { two_sided, plus, minus };

inline std::string to_string(Side side) {
  switch (side) {
    case Side::plus: return "plus";
    case Side::minus: return "minus";
    default: return "two-sided";
  }
}

inline Side parse_side(const std::string& text) {
  if (text == "two-sided" || text == "two_sided" || text == "both") return Side::two_sided;
  if (text == "plus" || text == "+") return Side::plus;
  if (text == "minus" || text == "-") return Side::minus;
  throw InputError("unknown side '" + text + "' (expected two-sided, plus or minus)");
}

enum class SpectrumMethod { gamma_grid, windowed_svd, bohl_exact_scalar };

inline std::string to_string(SpectrumMethod method) {
  switch (method) {
    case SpectrumMethod::windowed_svd: return "windowed-svd";
    case SpectrumMethod::bohl_exact_scalar: return "bohl-exact-scalar";
    default: return "gamma-grid";
  }
}

inline constexpr Index kDefaultWindow = 1024;
inline constexpr double kDefaultGridStep = 0.01;
inline constexpr double kDefaultGapThreshold = 0.01;

// ---------------------------------------------------------------------------
// Window exponents

/// mu_i(n) = (1/L) log sigma_i(Phi(n + L, n)) for every start n with
/// [n, n + L] inside the horizon; each row sorted descending.
struct WindowExponentTable {
  Index window_length = 0;
  Horizon horizon{};
  Eigen::MatrixXd values;  // rows: starts n_min .. n_max - L; cols: i = 1..d

  int dim() const noexcept { return static_cast<int>(values.cols()); }
  Index rows() const noexcept { return values.rows(); }
  Index first_start() const noexcept { return horizon.n_min; }
  Index last_start() const noexcept { return horizon.n_max - window_length; }
  Index start(Index row) const noexcept { return horizon.n_min + row; }

  /// Row range [begin, end) whose windows lie in the time set of `side`.
  std::pair<Index, Index> rows_for(Side side) const {
    Index lo = first_start();
    Index hi = last_start();
    if (side == Side::plus) lo = std::max<Index>(lo, 0);
    if (side == Side::minus) hi = std::min<Index>(hi, -window_length);
    if (lo > hi)
      throw InputError("horizon [" + std::to_string(horizon.n_min) + ", " +
                       std::to_string(horizon.n_max) + "] too short for window " +
                       std::to_string(window_length) + " on side " + to_string(side));
    return {lo - horizon.n_min, hi - horizon.n_min + 1};
  }
};

namespace detail {

inline double log_largest_singular_value(const ScaledMatrix& p) {
  if (p.log_scale == -std::numeric_limits<double>::infinity())
    return -std::numeric_limits<double>::infinity();
  const double s = p.unit.size() == 1 ? std::abs(p.unit(0, 0))
                                      : Eigen::JacobiSVD<Matrix>(p.unit).singularValues()(0);
  return std::log(s) + p.log_scale;
}

inline double log_abs_det(const Matrix& m) {
  if (m.size() == 1) return std::log(std::abs(m(0, 0)));
  const Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix& packed = lu.matrixLU();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) sum += std::log(std::abs(packed(i, i)));
  return sum;
}

}  // namespace detail

/// Singular values of k-fold products are recovered from compound matrices:
/// log(sigma_1...sigma_k) is the log top singular value of the k-th compound
/// product, and the k = d term is an exact sum of log|det|. This keeps every
/// exponent accurate even when the window product's condition number is far
/// beyond double precision.
inline WindowExponentTable window_exponents(const MatrixSequence& m, Index window) {
  if (!m.square()) throw InputError("window_exponents requires a square sequence");
  if (window < 1) throw InputError("window length must be at least 1");
  const Horizon& h = m.horizon();
  if (h.n_max - h.n_min < 2 * window)
    throw InputError("horizon [" + std::to_string(h.n_min) + ", " + std::to_string(h.n_max) +
                     "] too short for window length " + std::to_string(window));
  const int d = m.rows();
  const std::vector<Matrix> factors = m.sample();
  const Index starts = h.n_max - h.n_min - window + 1;
  const double inv_window = 1.0 / static_cast<double>(window);

  // cumulative log|det|: s_d over every window
  std::vector<long double> log_det_prefix(factors.size() + 1, 0.0L);
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const double ld = detail::log_abs_det(factors[i]);
    if (!std::isfinite(ld))
      throw NumericalRangeError("window_exponents: singular factor at index " +
                                std::to_string(h.n_min + static_cast<Index>(i)));
    log_det_prefix[i + 1] = log_det_prefix[i] + ld;
  }

  // partial[k](row) = log(sigma_1 ... sigma_k) of the window product, k = 0..d
  Eigen::MatrixXd partial(starts, d + 1);
  partial.col(0).setZero();
  for (Index row = 0; row < starts; ++row)
    partial(row, d) = static_cast<double>(log_det_prefix[static_cast<std::size_t>(row + window)] -
                                          log_det_prefix[static_cast<std::size_t>(row)]);

  for (int k = 1; k < d; ++k) {
    std::vector<Matrix> compounds(factors.size());
    const auto subsets = index_subsets(d, k);
    parallel_for(0, static_cast<Index>(factors.size()), [&](Index i) {
      compounds[static_cast<std::size_t>(i)] =
          k == 1 ? factors[static_cast<std::size_t>(i)]
                 : compound(factors[static_cast<std::size_t>(i)], k, subsets);
    });
    const CheckpointedProducts products(std::move(compounds), kCheckpointStride);
    const Index chunks = (starts + kCheckpointStride - 1) / kCheckpointStride;
    parallel_for(0, chunks, [&](Index c) {
      CheckpointedProducts::BlockRunCache cache;
      const Index end = std::min(starts, (c + 1) * kCheckpointStride);
      for (Index row = c * kCheckpointStride; row < end; ++row)
        partial(row, k) =
            detail::log_largest_singular_value(products.product(row + window, row, &cache));
    });
  }

  WindowExponentTable table;
  table.window_length = window;
  table.horizon = h;
  table.values.resize(starts, d);
  for (Index row = 0; row < starts; ++row) {
    for (int i = 0; i < d; ++i) {
      const double mu = (partial(row, i + 1) - partial(row, i)) * inv_window;
      if (!std::isfinite(mu))
        throw NumericalRangeError("window_exponents: non-finite exponent for window starting at " +
                                  std::to_string(h.n_min + row));
      table.values(row, i) = mu;
    }
    auto r = table.values.row(row);
    std::sort(r.begin(), r.end(), std::greater<>());
  }
  return table;
}

// ---------------------------------------------------------------------------
// Exponential dichotomy decisions

/// Decision for the shifted system x_{n+1} = e^{-gamma} M_n x_n.
///
/// `unstable_dim` is the split r: r window exponents above gamma, d - r below.
/// `projector_rank` is the rank of the stable projector P_n, i.e. d - r.
struct EDVerdict {
  double gamma = 0.0;
  bool has_ed = false;
  int unstable_dim = 0;
  int projector_rank = 0;
  double fitted_K = 1.0;
  double log_K = 0.0;
  double fitted_alpha = 0.0;
  double margin = 0.0;
};

/// Per-side extremes of the window exponents, reused across many gamma values.
class DichotomyAnalyzer {
 public:
  DichotomyAnalyzer(MatrixSequence m, Index window, double gap_threshold, Side side)
      : DichotomyAnalyzer(m, window_exponents(m, window), gap_threshold, side) {}

  DichotomyAnalyzer(MatrixSequence m, WindowExponentTable table, double gap_threshold, Side side)
      : sequence_(std::move(m)),
        table_(std::move(table)),
        gap_(gap_threshold),
        side_(side),
        fits_(std::make_shared<Fits>()) {
    if (!(gap_ >= 0.0)) throw InputError("gap threshold must be non-negative");
    const auto [begin, end] = table_.rows_for(side_);
    const auto block = table_.values.middleRows(begin, end - begin);
    min_mu_ = block.colwise().minCoeff().transpose();
    max_mu_ = block.colwise().maxCoeff().transpose();
  }

  const WindowExponentTable& table() const noexcept { return table_; }
  int dim() const noexcept { return table_.dim(); }
  Side side() const noexcept { return side_; }
  double gap_threshold() const noexcept { return gap_; }
  double lowest() const { return min_mu_.minCoeff(); }
  double highest() const { return max_mu_.maxCoeff(); }
  const Eigen::VectorXd& min_exponents() const noexcept { return min_mu_; }
  const Eigen::VectorXd& max_exponents() const noexcept { return max_mu_; }

  /// has_ed iff some split r keeps every window's mu_r above gamma + gap and
  /// mu_{r+1} below gamma - gap (mu_0 = +inf, mu_{d+1} = -inf).
  EDVerdict verdict(double gamma, bool fit_constant = false) const {
    const int d = dim();
    constexpr double inf = std::numeric_limits<double>::infinity();
    double best = -inf;
    int best_r = 0;
    for (int r = 0; r <= d; ++r) {
      const double above = r == 0 ? inf : min_mu_(r - 1) - gamma;
      const double below = r == d ? inf : gamma - max_mu_(r);
      const double score = std::min(above, below);
      if (score > best) {
        best = score;
        best_r = r;
      }
    }
    EDVerdict v;
    v.gamma = gamma;
    v.unstable_dim = best_r;
    v.projector_rank = d - best_r;
    v.margin = best - gap_;
    v.has_ed = v.margin > 0.0;
    v.fitted_alpha = v.has_ed ? best : 0.0;
    if (v.has_ed && fit_constant) {
      v.log_K = fit_log_constant(gamma, v.fitted_alpha, best_r);
      v.fitted_K = std::exp(v.log_K);
    }
    return v;
  }

 private:
  struct Fits {
    std::once_flag once;
    std::vector<WindowExponentTable> tables;
  };

  /// Worst transient over shorter dyadic windows l = L/2, L/4, ..., 1:
  /// log K = max(0, l (mu_{r+1} - (gamma - alpha)), l ((gamma + alpha) - mu_r)).
  double fit_log_constant(double gamma, double alpha, int r) const {
    std::call_once(fits_->once, [&] {
      for (Index l = table_.window_length / 2; l >= 1; l /= 2)
        fits_->tables.push_back(window_exponents(sequence_, l));
    });
    const int d = dim();
    double worst = 0.0;
    auto scan = [&](const WindowExponentTable& t) {
      const auto [begin, end] = t.rows_for(side_);
      const auto l = static_cast<double>(t.window_length);
      for (Index row = begin; row < end; ++row) {
        if (r < d) worst = std::max(worst, l * (t.values(row, r) - (gamma - alpha)));
        if (r > 0) worst = std::max(worst, l * ((gamma + alpha) - t.values(row, r - 1)));
      }
    };
    for (const auto& t : fits_->tables) scan(t);
    return worst;
  }

  MatrixSequence sequence_;
  WindowExponentTable table_;
  double gap_;
  Side side_;
  Eigen::VectorXd min_mu_;
  Eigen::VectorXd max_mu_;
  std::shared_ptr<Fits> fits_;
};

inline EDVerdict ed_test(const MatrixSequence& m, double gamma, Index window = kDefaultWindow,
                         double gap_threshold = kDefaultGapThreshold, Side side = Side::two_sided) {
  return DichotomyAnalyzer(m, window, gap_threshold, side).verdict(gamma, true);
}

// ---------------------------------------------------------------------------
// Spectrum estimates

struct SpectrumOptions {
  Side side = Side::two_sided;
  Index window = kDefaultWindow;
  double grid_step = kDefaultGridStep;
  double gap_threshold = kDefaultGapThreshold;
  bool record_verdicts = false;
};

/// Disjoint sorted closed intervals on the log-rate axis plus estimator provenance.
struct SpectrumEstimate {
  std::vector<Interval> intervals;
  Side side = Side::two_sided;
  Index window_length = kDefaultWindow;
  Horizon horizon{};
  SpectrumMethod method = SpectrumMethod::gamma_grid;
  double grid_step = kDefaultGridStep;
  double gap_threshold = kDefaultGapThreshold;
  std::vector<EDVerdict> verdicts;
};

/// Sorts and fuses overlapping or touching intervals.
inline std::vector<Interval> merge_intervals(std::vector<Interval> in) {
  std::sort(in.begin(), in.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi); });
  std::vector<Interval> out;
  for (const auto& iv : in) {
    if (!out.empty() && iv.lo <= out.back().hi)
      out.back().hi = std::max(out.back().hi, iv.hi);
    else
      out.push_back(iv);
  }
  return out;
}

/// Fuses neighbours separated by less than `min_gap`, then keeps fusing the
/// narrowest remaining gap until at most `max_count` intervals remain.
inline std::vector<Interval> cap_intervals(std::vector<Interval> in, double min_gap,
                                           std::size_t max_count) {
  in = merge_intervals(std::move(in));
  std::vector<Interval> out;
  for (const auto& iv : in) {
    if (!out.empty() && iv.lo - out.back().hi < min_gap)
      out.back().hi = std::max(out.back().hi, iv.hi);
    else
      out.push_back(iv);
  }
  while (out.size() > max_count && out.size() > 1) {
    std::size_t narrowest = 0;
    for (std::size_t i = 1; i + 1 < out.size(); ++i)
      if (out[i + 1].lo - out[i].hi < out[narrowest + 1].lo - out[narrowest].hi) narrowest = i;
    out[narrowest].hi = out[narrowest + 1].hi;
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(narrowest) + 1);
  }
  return out;
}

inline SpectrumEstimate dichotomy_spectrum(const DichotomyAnalyzer& analyzer,
                                           const SpectrumOptions& opts) {
  const double step = opts.grid_step;
  if (!(step > 0.0)) throw InputError("grid step must be positive");
  const double gap = analyzer.gap_threshold();
  // Pad past the indeterminate band so both grid ends admit a dichotomy.
  const double lo = analyzer.lowest() - gap - 2.0 * step;
  const double hi = analyzer.highest() + gap + 2.0 * step;
  const auto points = static_cast<Index>(std::ceil((hi - lo) / step)) + 1;
  std::vector<char> in_spectrum(static_cast<std::size_t>(points));
  std::vector<EDVerdict> verdicts(opts.record_verdicts ? static_cast<std::size_t>(points) : 0);
  auto gamma_at = [&](Index k) { return lo + static_cast<double>(k) * step; };
  parallel_for(0, points, [&](Index k) {
    const EDVerdict v = analyzer.verdict(gamma_at(k), opts.record_verdicts);
    in_spectrum[static_cast<std::size_t>(k)] = v.has_ed ? 0 : 1;
    if (opts.record_verdicts) verdicts[static_cast<std::size_t>(k)] = v;
  });

  // Bisect between a passing and a failing gamma; return the failing side.
  auto refine = [&](double pass, double fail) {
    while (std::abs(fail - pass) > step / 8.0) {
      const double mid = 0.5 * (pass + fail);
      if (analyzer.verdict(mid).has_ed)
        pass = mid;
      else
        fail = mid;
    }
    return fail;
  };

  std::vector<Interval> raw;
  for (Index k = 0; k < points; ++k) {
    if (!in_spectrum[static_cast<std::size_t>(k)]) continue;
    Index j = k;
    while (j + 1 < points && in_spectrum[static_cast<std::size_t>(j + 1)]) ++j;
    const double left = k > 0 ? refine(gamma_at(k - 1), gamma_at(k)) : gamma_at(k);
    const double right = j + 1 < points ? refine(gamma_at(j + 1), gamma_at(j)) : gamma_at(j);
    raw.push_back({left, right});
    k = j;
  }

  SpectrumEstimate est;
  est.intervals = cap_intervals(std::move(raw), step, static_cast<std::size_t>(analyzer.dim()));
  est.side = analyzer.side();
  est.window_length = analyzer.table().window_length;
  est.horizon = analyzer.table().horizon;
  est.method = SpectrumMethod::gamma_grid;
  est.grid_step = step;
  est.gap_threshold = gap;
  est.verdicts = std::move(verdicts);
  return est;
}

/// Sacker-Sell spectrum estimate: gamma values on a grid whose shifted
/// system fails the window-gap dichotomy test, merged into intervals.
inline SpectrumEstimate dichotomy_spectrum(const MatrixSequence& m,
                                           const SpectrumOptions& opts = {}) {
  return dichotomy_spectrum(DichotomyAnalyzer(m, opts.window, opts.gap_threshold, opts.side),
                            opts);
}

inline SpectrumEstimate dichotomy_spectrum(const MatrixSequence& m, Side side, double grid_step,
                                           Index window) {
  SpectrumOptions opts;
  opts.side = side;
  opts.grid_step = grid_step;
  opts.window = window;
  return dichotomy_spectrum(m, opts);
}

/// Union of estimates, re-merged into disjoint intervals.
template <class... Estimates>
SpectrumEstimate merge_report(const SpectrumEstimate& first, const Estimates&... rest) {
  SpectrumEstimate out = first;
  out.verdicts.clear();
  (out.intervals.insert(out.intervals.end(), rest.intervals.begin(), rest.intervals.end()), ...);
  if (((rest.side != first.side) || ...)) out.side = Side::two_sided;
  out.intervals = merge_intervals(std::move(out.intervals));
  return out;
}

inline SpectrumEstimate merge_report(const std::vector<SpectrumEstimate>& estimates) {
  if (estimates.empty()) throw InputError("merge_report needs at least one estimate");
  SpectrumEstimate out = estimates.front();
  out.verdicts.clear();
  for (std::size_t i = 1; i < estimates.size(); ++i) {
    out.intervals.insert(out.intervals.end(), estimates[i].intervals.begin(),
                         estimates[i].intervals.end());
    if (estimates[i].side != out.side) out.side = Side::two_sided;
  }
  out.intervals = merge_intervals(std::move(out.intervals));
  return out;
}

// ---------------------------------------------------------------------------
// Scalar Bohl interval

/// [min, max] over admissible windows of the window average of log|p_n|.
inline Interval bohl_interval(const MatrixSequence& p, Index window, Side side = Side::two_sided) {
  if (p.rows() != 1 || p.cols() != 1) throw InputError("bohl_interval requires a scalar sequence");
  if (window < 1) throw InputError("window length must be at least 1");
  const Horizon& h = p.horizon();
  std::vector<long double> prefix(static_cast<std::size_t>(h.size()) + 1, 0.0L);
  for (Index n = h.n_min; n <= h.n_max; ++n) {
    const double v = p.at(n)(0, 0);
    if (v == 0.0) throw SingularityError(n, "bohl_interval: zero entry");
    prefix[h.offset(n) + 1] = prefix[h.offset(n)] + std::log(std::abs(v));
  }
  WindowExponentTable shape;
  shape.window_length = window;
  shape.horizon = h;
  if (h.n_max - h.n_min < window) throw InputError("horizon too short for window length");
  const auto [begin, end] = shape.rows_for(side);
  Interval out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (Index row = begin; row < end; ++row) {
    const double avg = static_cast<double>(
        (prefix[static_cast<std::size_t>(row + window)] - prefix[static_cast<std::size_t>(row)]) /
        static_cast<long double>(window));
    out.lo = std::min(out.lo, avg);
    out.hi = std::max(out.hi, avg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lyapunov spectrum

/// Discrete QR method: propagate an orthonormal frame from max(0, n_min) for
/// up to n_samples steps, re-orthonormalizing each step, and average the log
/// diagonal of the triangular factors. Returned descending.
inline std::vector<double> lyapunov_spectrum(const MatrixSequence& m, Index n_samples) {
  if (!m.square()) throw InputError("lyapunov_spectrum requires a square sequence");
  if (n_samples < 1) throw InputError("lyapunov_spectrum needs at least one step");
  const Horizon& h = m.horizon();
  const Index start = std::max<Index>(0, h.n_min);
  const Index stop = std::min(h.n_max, start + n_samples);
  if (stop <= start) throw InputError("lyapunov_spectrum: horizon has no steps after 0");
  const int d = m.rows();
  Matrix q = Matrix::Identity(d, d);
  std::vector<long double> sums(static_cast<std::size_t>(d), 0.0L);
  for (Index n = start; n < stop; ++n) {
    Eigen::HouseholderQR<Matrix> qr(m.at(n) * q);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    q = qr.householderQ() * Matrix::Identity(d, d);
    for (int i = 0; i < d; ++i) {
      const double rii = std::abs(r(i, i));
      if (rii == 0.0) throw SingularityError(n, "lyapunov_spectrum: singular step matrix");
      sums[static_cast<std::size_t>(i)] += std::log(rii);
    }
  }
  std::vector<double> out(static_cast<std::size_t>(d));
  const auto steps = static_cast<long double>(stop - start);
  for (int i = 0; i < d; ++i)
    out[static_cast<std::size_t>(i)] = static_cast<double>(sums[static_cast<std::size_t>(i)] / steps);
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

// ---------------------------------------------------------------------------
// Interval-set comparisons

inline std::vector<Interval> dilate(const std::vector<Interval>& set, double by) {
  std::vector<Interval> out;
  out.reserve(set.size());
  for (const auto& iv : set) out.push_back({iv.lo - by, iv.hi + by});
  return merge_intervals(std::move(out));
}

/// Every interval of `inner` lies inside one interval of `outer` dilated by `slack`.
inline bool is_subset(const std::vector<Interval>& inner, const std::vector<Interval>& outer,
                      double slack = 0.0) {
  const auto grown = dilate(outer, slack);
  return std::all_of(inner.begin(), inner.end(), [&](const Interval& iv) {
    return std::any_of(grown.begin(), grown.end(), [&](const Interval& o) {
      return iv.lo >= o.lo && iv.hi <= o.hi;
    });
  });
}

inline bool contains_point(const std::vector<Interval>& set, double x, double slack = 0.0) {
  return std::any_of(set.begin(), set.end(),
                     [&](const Interval& iv) { return iv.contains(x, slack); });
}

/// Largest endpoint discrepancy between two interval lists, or +inf when the
/// counts differ.
inline double endpoint_error(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max({worst, std::abs(a[i].lo - b[i].lo), std::abs(a[i].hi - b[i].hi)});
  return worst;
}

}  // namespace tvspec
