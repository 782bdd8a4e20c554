#pragma once

#include <cstdlib>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tvspec/assignment.hpp"
#include "tvspec/constructions.hpp"
#include "tvspec/continuous.hpp"
#include "tvspec/controllability.hpp"
#include "tvspec/io.hpp"
#include "tvspec/parallel.hpp"
#include "tvspec/spectrum.hpp"
#include "tvspec/transforms.hpp"

namespace tvspec::cli {

using Json = nlohmann::json;

enum ExitCode : int { kSuccess = 0, kVerificationFailed = 1, kInputError = 2, kNumericalError = 3 };

/// Everything that determines a run's output; serialized into every report.
struct RunConfig {
  std::string command;
  std::string system_path;
  std::string assignment_path;
  std::string continuous_path;
  std::optional<Index> horizon_min;
  std::optional<Index> horizon_max;
  Index window = kDefaultWindow;
  double grid_step = kDefaultGridStep;
  double gap_threshold = kDefaultGapThreshold;
  std::optional<double> tolerance;
  std::string side = "two-sided";
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string csv_path;
  bool verdicts = false;

  // command specific
  std::optional<Index> samples;
  int max_window = 32;
  double floor = kGramianFloor;
  std::string targets;
  std::optional<std::uint64_t> offdiag_seed;
  double offdiag_scale = 2.0;
  std::string method = "exact";
  int substeps = 64;
  bool with_spectrum = false;
  std::string demo_case;
  int block = 1;
  int fills = 5;
  std::set<std::string> given;  // options passed explicitly on the command line

  std::optional<Horizon> horizon() const {
    if (!horizon_min && !horizon_max) return std::nullopt;
    if (!horizon_min || !horizon_max)
      throw InputError("--horizon-min and --horizon-max must be given together");
    return make_horizon(*horizon_min, *horizon_max);
  }

  SpectrumOptions spectrum_options() const {
    SpectrumOptions opts;
    opts.side = parse_side(side);
    opts.window = window;
    opts.grid_step = grid_step;
    opts.gap_threshold = gap_threshold;
    opts.record_verdicts = verdicts;
    return opts;
  }

  void validate() const {
    if (window < 1) throw InputError("--window must be positive");
    if (!(grid_step > 0.0)) throw InputError("--grid-step must be positive");
    if (!(gap_threshold > 0.0)) throw InputError("--gap must be positive");
    if (tolerance && !(*tolerance > 0.0)) throw InputError("--tol must be positive");
    if (max_window < 1) throw InputError("--max-window must be positive");
    if (!(floor > 0.0)) throw InputError("--floor must be positive");
    if (substeps < 1) throw InputError("--substeps must be positive");
    if (!(offdiag_scale >= 0.0)) throw InputError("--offdiag-scale must be non-negative");
    if (samples && *samples < 1) throw InputError("--samples must be positive");
    parse_side(side);
    horizon();
  }

  Json to_json() const {
    auto opt = [](const auto& v) { return v ? Json(*v) : Json(nullptr); };
    auto path = [](const std::string& s) { return s.empty() ? Json(nullptr) : Json(s); };
    Json horizon_json = nullptr;
    if (horizon_min && horizon_max) horizon_json = {{"min", *horizon_min}, {"max", *horizon_max}};
    Json out = {
        {"command", command},
        {"inputs",
         {{"system", path(system_path)},
          {"assignment", path(assignment_path)},
          {"continuous", path(continuous_path)}}},
        {"horizon", horizon_json},
        {"window", window},
        {"grid_step", grid_step},
        {"gap_threshold", gap_threshold},
        {"tolerance", opt(tolerance)},
        {"side", side},
        {"seed", opt(seed)},
        {"outputs", {{"report", path(out_path)}, {"csv", path(csv_path)}}},
        {"emit_csv", !csv_path.empty()},
        {"verdicts", verdicts},
    };
    Json extra = Json::object();
    if (command == "lyapunov") extra["samples"] = opt(samples);
    if (command == "ucc" || command == "assign" || command == "demo") {
      extra["max_window"] = max_window;
      extra["floor"] = floor;
    }
    if (command == "assign" || command == "demo") {
      extra["targets"] = targets;
      extra["offdiag_seed"] = opt(offdiag_seed);
      extra["offdiag_scale"] = offdiag_scale;
    }
    if (command == "discretize") {
      extra["method"] = method;
      extra["substeps"] = substeps;
      extra["with_spectrum"] = with_spectrum;
    }
    if (command == "demo") {
      extra["case"] = demo_case;
      extra["block"] = block;
      extra["fills"] = fills;
    }
    out["options"] = std::move(extra);
    return out;
  }
};

namespace detail {

inline std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("TVSPEC_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(raw, &used);
    if (used != std::string(raw).size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw InputError(std::string("TVSPEC_SEED must be a non-negative integer, got '") + raw + "'");
  }
}

inline void emit(const RunConfig& cfg, const Json& report, std::ostream& out, bool compact = false) {
  const std::string text = (compact ? report.dump() : report.dump(2)) + "\n";
  if (cfg.out_path.empty())
    out << text;
  else
    io::write_file(cfg.out_path, text);
}

inline Json report_header(const RunConfig& cfg) { return {{"config", cfg.to_json()}}; }

inline io::SystemDefinition load_system(const RunConfig& cfg) {
  if (cfg.system_path.empty()) throw InputError("--system is required");
  return io::load_system(io::read_json_file(cfg.system_path), {cfg.horizon(), cfg.seed});
}

inline const MatrixSequence& require_input(const io::SystemDefinition& sys) {
  if (!sys.B) throw InputError("this command needs an input matrix (params.input with input_dim)");
  return *sys.B;
}

inline TargetSpectrum parse_targets(const std::string& text, int dim) {
  if (text.empty()) throw InputError("--targets is required");
  return make_targets(io::parse_targets(text), dim);
}

/// Per-target endpoint differences for humans reading a failed verification.
inline Json interval_diff(const std::vector<Interval>& estimate, const std::vector<Interval>& targets) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < std::max(estimate.size(), targets.size()); ++i) {
    Json row = Json::object();
    row["target"] = i < targets.size() ? Json({targets[i].lo, targets[i].hi}) : Json(nullptr);
    row["estimate"] = i < estimate.size() ? Json({estimate[i].lo, estimate[i].hi}) : Json(nullptr);
    if (i < targets.size() && i < estimate.size()) {
      row["lo_error"] = std::abs(estimate[i].lo - targets[i].lo);
      row["hi_error"] = std::abs(estimate[i].hi - targets[i].hi);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json exponent_ranges(const DichotomyAnalyzer& analyzer) {
  Json rows = Json::array();
  for (int i = 0; i < analyzer.dim(); ++i)
    rows.push_back({{"index", i + 1},
                    {"min", analyzer.min_exponents()(i)},
                    {"max", analyzer.max_exponents()(i)}});
  return rows;
}

inline AssignOptions assign_options(const RunConfig& cfg, double default_tol) {
  AssignOptions opts;
  opts.max_window = cfg.max_window;
  opts.gramian_floor = cfg.floor;
  opts.tolerance = cfg.tolerance.value_or(default_tol);
  opts.spectrum = cfg.spectrum_options();
  opts.triangularize.offdiag_seed = cfg.offdiag_seed;
  opts.triangularize.offdiag_scale = cfg.offdiag_scale;
  return opts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_spectrum(const RunConfig& cfg, std::ostream& out) {
  const auto sys = detail::load_system(cfg);
  const SpectrumOptions opts = cfg.spectrum_options();
  const DichotomyAnalyzer analyzer(sys.A, opts.window, opts.gap_threshold, opts.side);
  const SpectrumEstimate est = dichotomy_spectrum(analyzer, opts);
  Json report = detail::report_header(cfg);
  report["spectrum"] = io::to_json(est);
  report["exponent_ranges"] = detail::exponent_ranges(analyzer);
  report["system"] = sys.source;
  if (sys.dim == 1) {
    const Interval bohl = bohl_interval(sys.A, opts.window, opts.side);
    report["bohl_interval"] = {bohl.lo, bohl.hi};
  }
  if (!cfg.csv_path.empty())
    io::write_file(cfg.csv_path, io::window_exponents_csv(analyzer.table()));
  detail::emit(cfg, report, out);
  return kSuccess;
}

inline int cmd_lyapunov(const RunConfig& cfg, std::ostream& out) {
  const auto sys = detail::load_system(cfg);
  const Index available = sys.horizon.n_max - std::max<Index>(0, sys.horizon.n_min);
  const Index samples = cfg.samples.value_or(available);
  Json report = detail::report_header(cfg);
  report["exponents"] = lyapunov_spectrum(sys.A, samples);
  report["samples"] = samples;
  report["system"] = sys.source;
  detail::emit(cfg, report, out);
  return kSuccess;
}

inline int cmd_ucc(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto sys = detail::load_system(cfg);
  const UccCertificate cert = check_ucc(sys.A, detail::require_input(sys), cfg.max_window, cfg.floor);
  Json report = detail::report_header(cfg);
  report["certificate"] = io::to_json(cert);
  detail::emit(cfg, report, out);
  if (!cert.ok) {
    err << "no controllability window up to K = " << cfg.max_window
        << " has Gramian eigenvalues above " << cfg.floor << "\n";
    return kVerificationFailed;
  }
  return kSuccess;
}

inline Json assignment_document(const RunConfig& cfg, const io::SystemDefinition& sys,
                                const AssignmentResult& r) {
  Json doc = detail::report_header(cfg);
  doc["system"] = sys.source;
  doc["targets"] = io::to_json(r.targets.intervals);
  doc["certificate"] = io::to_json(r.certificate);
  doc["U"] = io::sequence_to_json(r.U);
  doc["C"] = io::sequence_to_json(r.C);
  doc["T"] = io::sequence_to_json(r.T);
  Json windows = Json::array();
  for (const auto& [start, len] : r.windows) windows.push_back({start, len});
  doc["windows"] = std::move(windows);
  doc["retries"] = r.retries;
  doc["equivalence_residual"] = r.equivalence_residual;
  doc["closed_loop_validation"] = io::to_json(r.closed_loop_validation);
  doc["verification"] = io::to_json(r.verification);
  doc["diff"] = detail::interval_diff(r.verification.estimate.intervals, r.verification.targets);
  return doc;
}

inline int cmd_assign(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto sys = detail::load_system(cfg);
  const MatrixSequence& b = detail::require_input(sys);
  const TargetSpectrum targets = detail::parse_targets(cfg.targets, sys.dim);
  const AssignmentResult r = assign_spectrum(sys.A, b, targets, detail::assign_options(cfg, 0.05));
  detail::emit(cfg, assignment_document(cfg, sys, r), out, true);
  if (!r.verification.passed) {
    err << "verification failed: max endpoint error " << r.verification.max_endpoint_error
        << " > tolerance " << r.verification.tolerance << "\n";
    return kVerificationFailed;
  }
  return kSuccess;
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.assignment_path.empty()) throw InputError("--assignment is required");
  const Json doc = io::read_json_file(cfg.assignment_path);
  for (const char* key : {"system", "targets", "U"})
    if (!doc.contains(key)) throw InputError("assignment file lacks field '" + std::string(key) + "'");
  // The stored definition already carries its resolved horizon and seed.
  const auto sys = io::load_system(doc["system"]);
  const MatrixSequence& b = detail::require_input(sys);
  const MatrixSequence u = io::sequence_from_json(doc["U"], "U.");
  const TargetSpectrum targets =
      make_targets(io::parse_interval_list(doc["targets"], "targets"), sys.dim);
  const MatrixSequence closed = apply_feedback(sys.A, b, u).materialize();

  Json report = detail::report_header(cfg);
  const LyapunovValidation validation = validate_lyapunov(closed);
  report["closed_loop_validation"] = io::to_json(validation);
  if (doc.contains("T") && doc.contains("C"))
    report["equivalence_residual"] =
        equivalence_residual(closed, io::sequence_from_json(doc["T"], "T."),
                             io::sequence_from_json(doc["C"], "C."));
  if (!validation.ok) {
    detail::emit(cfg, report, out);
    err << "closed loop is not a Lyapunov sequence\n";
    return kVerificationFailed;
  }
  // Estimator settings default to those the assignment was verified with.
  SpectrumOptions opts = cfg.spectrum_options();
  double tolerance = cfg.tolerance.value_or(0.05);
  if (doc.contains("config") && doc["config"].is_object()) {
    const Json& stored = doc["config"];
    auto adopt = [&](const char* option, const char* key, auto& field) {
      if (!cfg.given.count(option) && stored.contains(key) && !stored[key].is_null())
        field = stored[key].get<std::decay_t<decltype(field)>>();
    };
    adopt("--window", "window", opts.window);
    adopt("--grid-step", "grid_step", opts.grid_step);
    adopt("--gap", "gap_threshold", opts.gap_threshold);
    adopt("--tol", "tolerance", tolerance);
    if (!cfg.given.count("--side") && stored.contains("side") && stored["side"].is_string())
      opts.side = parse_side(stored["side"].get<std::string>());
  }
  report["config"]["window"] = opts.window;
  report["config"]["grid_step"] = opts.grid_step;
  report["config"]["gap_threshold"] = opts.gap_threshold;
  report["config"]["side"] = to_string(opts.side);
  report["config"]["tolerance"] = tolerance;
  const Verification v = verify_spectrum(closed, targets, tolerance, opts);
  report["verification"] = io::to_json(v);
  report["diff"] = detail::interval_diff(v.estimate.intervals, v.targets);
  detail::emit(cfg, report, out);
  if (!v.passed) {
    err << "verification failed: max endpoint error " << v.max_endpoint_error << " > tolerance "
        << v.tolerance << "\n";
    for (const auto& row : report["diff"]) err << "  " << row.dump() << "\n";
    return kVerificationFailed;
  }
  return kSuccess;
}

inline int cmd_discretize(const RunConfig& cfg, std::ostream& out) {
  if (cfg.continuous_path.empty()) throw InputError("--continuous is required");
  const ContinuousSystem w = io::load_continuous(io::read_json_file(cfg.continuous_path), cfg.horizon());
  DiscretizeOptions opts;
  if (cfg.method == "exact")
    opts.method = DiscretizationMethod::exact;
  else if (cfg.method == "integrate")
    opts.method = DiscretizationMethod::integrate;
  else
    throw InputError("--method must be 'exact' or 'integrate'");
  opts.substeps = cfg.substeps;
  const Discretization disc = discretize_one_time(w, opts);
  const Json system = io::explicit_system_json(disc.sequence);
  // Without --out the bare system goes to stdout so it can be piped, unless a report was asked for.
  if (cfg.out_path.empty() && !cfg.with_spectrum) {
    out << system.dump(2) << "\n";
    return kSuccess;
  }
  if (!cfg.out_path.empty()) io::write_file(cfg.out_path, system.dump(2) + "\n");
  Json report = detail::report_header(cfg);
  report["kappa"] = disc.kappa;
  report["substeps"] = disc.substeps;
  report["method"] = disc.method == DiscretizationMethod::exact ? "exact" : "integrate";
  report["source"] = w.name();
  if (cfg.with_spectrum) report["spectrum"] = io::to_json(dichotomy_spectrum(disc.sequence, cfg.spectrum_options()));
  if (cfg.out_path.empty()) report["system"] = system;
  out << report.dump(2) << "\n";
  return kSuccess;
}

// ---------------------------------------------------------------------------
// Demo cases

namespace demo {

inline Horizon horizon(const RunConfig& cfg) { return cfg.horizon().value_or(symmetric_horizon()); }

/// Dyadic diagonal sequence: each channel's estimate against its target.
inline Json dyadic(const RunConfig& cfg) {
  const std::string text = cfg.targets.empty() ? "[-1,-0.5],[0.2,0.2],[0.8,1.5]" : cfg.targets;
  const auto targets = io::parse_targets(text);
  const double tol = cfg.tolerance.value_or(0.02);
  const Horizon h = horizon(cfg);
  const SpectrumOptions opts = cfg.spectrum_options();
  Json channels = Json::array();
  bool passed = true;
  for (const auto& t : targets) {
    const MatrixSequence p = dyadic_sequence(h, {t}, 1);
    const SpectrumEstimate est = dichotomy_spectrum(p, opts);
    const Interval bohl = bohl_interval(p, opts.window, opts.side);
    const double error = endpoint_error(est.intervals, {t});
    const double width = est.intervals.size() == 1 ? est.intervals[0].width() : 0.0;
    const bool ok = t.width() == 0.0 ? (est.intervals.size() == 1 && width <= tol) : error <= tol;
    passed = passed && ok;
    channels.push_back({{"target", {t.lo, t.hi}},
                        {"estimate", io::to_json(est.intervals)},
                        {"bohl_interval", {bohl.lo, bohl.hi}},
                        {"endpoint_error", error},
                        {"passed", ok}});
  }
  const auto all = make_targets(targets, static_cast<int>(targets.size()));
  const SpectrumEstimate joint =
      dichotomy_spectrum(dyadic_sequence(h, all.intervals, static_cast<int>(targets.size())), opts);
  return {{"channels", std::move(channels)},
          {"diagonal_system", io::to_json(joint)},
          {"tolerance", tol},
          {"passed", passed}};
}

/// Block-triangular system: half-line block spectra inside the full
/// spectrum, which lies inside the union of the block spectra.
inline Json triangular(const RunConfig& cfg) {
  const int d = 3;
  if (cfg.block < 1 || cfg.block >= d) throw InputError("--block must be 1 or 2");
  const double dilation = cfg.tolerance.value_or(0.02);
  const auto ex = block_triangular_example(horizon(cfg), d, cfg.block, cfg.seed.value_or(0));
  SpectrumOptions opts = cfg.spectrum_options();
  auto both_halves = [&](const MatrixSequence& m) {
    const WindowExponentTable table = window_exponents(m, opts.window);
    std::vector<Interval> out;
    for (Side side : {Side::plus, Side::minus}) {
      opts.side = side;
      const auto est = dichotomy_spectrum(DichotomyAnalyzer(m, table, opts.gap_threshold, side), opts);
      out.insert(out.end(), est.intervals.begin(), est.intervals.end());
    }
    opts.side = Side::two_sided;
    return std::make_pair(out, dichotomy_spectrum(DichotomyAnalyzer(m, table, opts.gap_threshold,
                                                                    Side::two_sided),
                                                  opts)
                                   .intervals);
  };
  const auto [half_a, full_a] = both_halves(ex.A);
  const auto [half_b, full_b] = both_halves(ex.B);
  opts.side = Side::two_sided;
  const auto full_d = dichotomy_spectrum(ex.D, opts).intervals;
  std::vector<Interval> inner = half_a, outer = full_a;
  inner.insert(inner.end(), half_b.begin(), half_b.end());
  outer.insert(outer.end(), full_b.begin(), full_b.end());
  const bool lower = is_subset(inner, dilate(full_d, dilation));
  const bool upper = is_subset(full_d, dilate(outer, dilation));
  return {{"block", cfg.block},
          {"diagonal_rates", io::to_json(ex.intervals)},
          {"spectrum_A", io::to_json(full_a)},
          {"spectrum_B", io::to_json(full_b)},
          {"half_line_spectra", io::to_json(inner)},
          {"spectrum_D", io::to_json(full_d)},
          {"dilation", dilation},
          {"lower_inclusion", lower},
          {"upper_inclusion", upper},
          {"passed", lower && upper}};
}

/// Upper-triangular systems with symmetric dyadic diagonals and seeded
/// bounded fills: the spectrum is the union of the diagonal spectra.
inline Json symmetric(const RunConfig& cfg) {
  const std::string text = cfg.targets.empty() ? "[-1,-0.5],[0,0.3],[0.8,1.2]" : cfg.targets;
  const auto targets = io::parse_targets(text);
  const int d = static_cast<int>(targets.size());
  const double tol = cfg.tolerance.value_or(0.05);
  const Horizon h = horizon(cfg);
  const SpectrumOptions opts = cfg.spectrum_options();
  const DiagonalTargets diag = build_diagonal_sequences(make_targets(targets, d), h, d);
  std::vector<SpectrumEstimate> scalar;
  for (int i = 0; i < d; ++i) scalar.push_back(dichotomy_spectrum(diag.scalar(i), opts));
  const SpectrumEstimate expected = merge_report(scalar);
  Json fills = Json::array();
  bool passed = true;
  for (int f = 0; f < cfg.fills; ++f) {
    const std::uint64_t seed = splitmix64(cfg.seed.value_or(0) + static_cast<std::uint64_t>(f));
    const SpectrumEstimate est =
        dichotomy_spectrum(triangular_targets(diag, seed, cfg.offdiag_scale).materialize(), opts);
    const double error = endpoint_error(est.intervals, expected.intervals);
    passed = passed && error <= tol;
    fills.push_back({{"fill_seed", seed},
                     {"estimate", io::to_json(est.intervals)},
                     {"endpoint_error", error}});
  }
  return {{"union_of_diagonal_spectra", io::to_json(expected.intervals)},
          {"fills", std::move(fills)},
          {"tolerance", tol},
          {"passed", passed}};
}

/// Default control pair: a double integrator with unit-step input.
inline Json default_control_system() {
  return {{"dim", 2},
          {"input_dim", 1},
          {"kind", "constant"},
          {"params",
           {{"matrix", {{1.0, 1.0}, {0.0, 1.0}}},
            {"input", {{"kind", "constant"}, {"params", {{"matrix", {{0.0}, {1.0}}}}}}}}}};
}

inline std::pair<Json, bool> assignment(const RunConfig& cfg) {
  const Json def = cfg.system_path.empty() ? default_control_system() : io::read_json_file(cfg.system_path);
  const auto sys = io::load_system(def, {cfg.horizon(), cfg.seed});
  const TargetSpectrum targets =
      detail::parse_targets(cfg.targets.empty() ? "[-1,-0.5],[0,0]" : cfg.targets, sys.dim);
  const AssignmentResult r =
      assign_spectrum(sys.A, detail::require_input(sys), targets, detail::assign_options(cfg, 0.05));
  const bool passed = r.verification.passed && r.closed_loop_validation.ok;
  return {{{"system", sys.source},
           {"certificate", io::to_json(r.certificate)},
           {"closed_loop_validation", io::to_json(r.closed_loop_validation)},
           {"equivalence_residual", r.equivalence_residual},
           {"retries", r.retries},
           {"verification", io::to_json(r.verification)},
           {"diff", detail::interval_diff(r.verification.estimate.intervals, r.verification.targets)},
           {"passed", passed}},
          passed};
}

/// Continuous embedding of an upper-triangular system with dyadic diagonal:
/// exact exponentials and RK4 give the spectrum of the discrete system.
inline Json continuous(const RunConfig& cfg) {
  const double tol = cfg.tolerance.value_or(0.02);
  const std::string text = cfg.targets.empty() ? "[-1,-0.5],[0.2,0.4],[1,1.5]" : cfg.targets;
  const auto targets = io::parse_targets(text);
  const int d = static_cast<int>(targets.size());
  const Horizon h = horizon(cfg);
  const DiagonalTargets diag = build_diagonal_sequences(make_targets(targets, d), h, d);
  const MatrixSequence triangular =
      triangular_targets(diag, cfg.seed.value_or(0), cfg.offdiag_scale).materialize();
  const ContinuousSystem w = logarithmic_embedding(triangular);
  const SpectrumOptions opts = cfg.spectrum_options();
  DiscretizeOptions exact;
  DiscretizeOptions rk4;
  rk4.method = DiscretizationMethod::integrate;
  rk4.substeps = cfg.substeps;
  const Discretization de = discretize_one_time(w, exact);
  const Discretization di = discretize_one_time(w, rk4);
  const auto discrete = dichotomy_spectrum(triangular, opts).intervals;
  const auto via_exact = dichotomy_spectrum(de.sequence, opts).intervals;
  const auto via_rk4 = dichotomy_spectrum(di.sequence, opts).intervals;
  const double routes = endpoint_error(via_exact, via_rk4);
  const double embedding = endpoint_error(via_exact, discrete);
  return {{"discrete_spectrum", io::to_json(discrete)},
          {"exact_spectrum", io::to_json(via_exact)},
          {"integrated_spectrum", io::to_json(via_rk4)},
          {"route_error", routes},
          {"embedding_error", embedding},
          {"kappa", de.kappa},
          {"tolerance", tol},
          {"passed", routes <= tol && embedding <= tol}};
}

}  // namespace demo

inline int cmd_demo(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Json body;
  bool passed = false;
  const std::string& name = cfg.demo_case;
  if (name == "dyadic") {
    body = demo::dyadic(cfg);
  } else if (name == "triangular") {
    body = demo::triangular(cfg);
  } else if (name == "symmetric") {
    body = demo::symmetric(cfg);
  } else if (name == "assignment" || name == "theorem-2.5") {
    body = demo::assignment(cfg).first;
  } else if (name == "continuous") {
    body = demo::continuous(cfg);
  } else {
    throw InputError("unknown demo case '" + name +
                     "' (expected dyadic, triangular, symmetric, assignment, continuous)");
  }
  passed = body.at("passed").get<bool>();
  Json report = detail::report_header(cfg);
  report["case"] = name;
  report["result"] = std::move(body);
  detail::emit(cfg, report, out);
  if (!passed) {
    err << "demo '" << name << "' did not pass\n";
    return kVerificationFailed;
  }
  return kSuccess;
}

// ---------------------------------------------------------------------------

inline int dispatch(RunConfig cfg, std::ostream& out, std::ostream& err) {
  if (auto seed = detail::env_seed()) cfg.seed = seed;
  cfg.validate();
  if (cfg.command == "spectrum") return cmd_spectrum(cfg, out);
  if (cfg.command == "lyapunov") return cmd_lyapunov(cfg, out);
  if (cfg.command == "ucc") return cmd_ucc(cfg, out, err);
  if (cfg.command == "assign") return cmd_assign(cfg, out, err);
  if (cfg.command == "verify") return cmd_verify(cfg, out, err);
  if (cfg.command == "discretize") return cmd_discretize(cfg, out);
  if (cfg.command == "demo") return cmd_demo(cfg, out, err);
  throw InputError("unknown command '" + cfg.command + "'");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Spectra, controllability and spectrum assignment for discrete time-varying systems",
               "tvspec"};
  app.require_subcommand(1);
  RunConfig cfg;
  int threads = 0;
  app.add_option("--threads", threads, "Cap on worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--horizon-min", cfg.horizon_min, "Override the horizon start");
    sub->add_option("--horizon-max", cfg.horizon_max, "Override the horizon end");
    sub->add_option("--seed", cfg.seed, "Seed for random_bounded systems (TVSPEC_SEED overrides)");
    sub->add_option("--out", cfg.out_path, "Write the report here instead of stdout");
    sub->add_option("--threads", threads, "Cap on worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
  };
  auto spectral = [&](CLI::App* sub) {
    sub->add_option("--window,-L", cfg.window, "Window length L")->capture_default_str();
    sub->add_option("--grid-step", cfg.grid_step, "Spacing of the gamma grid")->capture_default_str();
    sub->add_option("--gap", cfg.gap_threshold, "Gap threshold of the dichotomy test")->capture_default_str();
    sub->add_option("--side", cfg.side, "two-sided, plus or minus")->capture_default_str();
    sub->add_flag("--verdicts", cfg.verdicts, "Include the per-gamma verdict table");
  };
  auto synthesis = [&](CLI::App* sub) {
    sub->add_option("--targets", cfg.targets, "Target intervals, e.g. \"[-1,-0.5],[0,0]\"");
    sub->add_option("--max-window", cfg.max_window, "Largest controllability window K")->capture_default_str();
    sub->add_option("--floor", cfg.floor, "Gramian eigenvalue floor")->capture_default_str();
    sub->add_option("--tol", cfg.tolerance, "Endpoint tolerance of the verification");
    sub->add_option("--offdiag-seed", cfg.offdiag_seed, "Seed bounded off-diagonal entries of C");
    sub->add_option("--offdiag-scale", cfg.offdiag_scale, "Bound of the off-diagonal entries")->capture_default_str();
  };

  auto* spectrum = app.add_subcommand("spectrum", "Estimate the dichotomy spectrum");
  spectrum->add_option("--system", cfg.system_path, "System definition (JSON)")->required();
  spectrum->add_option("--csv", cfg.csv_path, "Write window exponents (n, mu_1..mu_d) as CSV");
  common(spectrum);
  spectral(spectrum);

  auto* lyapunov = app.add_subcommand("lyapunov", "Estimate Lyapunov exponents (discrete QR)");
  lyapunov->add_option("--system", cfg.system_path, "System definition (JSON)")->required();
  lyapunov->add_option("--samples", cfg.samples, "Number of QR steps from max(0, horizon min)");
  common(lyapunov);

  auto* ucc = app.add_subcommand("ucc", "Certify uniform complete controllability");
  ucc->add_option("--system", cfg.system_path, "System definition with input (JSON)")->required();
  ucc->add_option("--max-window", cfg.max_window, "Largest window K")->capture_default_str();
  ucc->add_option("--floor", cfg.floor, "Gramian eigenvalue floor")->capture_default_str();
  common(ucc);

  auto* assign = app.add_subcommand("assign", "Assign the closed-loop dichotomy spectrum");
  assign->add_option("--system", cfg.system_path, "System definition with input (JSON)")->required();
  common(assign);
  spectral(assign);
  synthesis(assign);

  auto* verify = app.add_subcommand("verify", "Re-verify a stored assignment");
  verify->add_option("--assignment", cfg.assignment_path, "Assignment file from `assign`")->required();
  verify->add_option("--tol", cfg.tolerance, "Endpoint tolerance (default 0.05)");
  common(verify);
  spectral(verify);

  auto* discretize = app.add_subcommand("discretize", "One-time discretization of a continuous system");
  discretize->add_option("--continuous", cfg.continuous_path, "Continuous definition (JSON)")->required();
  discretize->add_option("--method", cfg.method, "exact or integrate")->capture_default_str();
  discretize->add_option("--substeps", cfg.substeps, "RK4 substeps per unit interval")->capture_default_str();
  discretize->add_flag("--spectrum", cfg.with_spectrum, "Also report the spectrum of the result");
  common(discretize);
  spectral(discretize);

  auto* demo = app.add_subcommand("demo", "Run a named construction end to end");
  demo->add_option("--case", cfg.demo_case, "dyadic, triangular, symmetric, assignment, continuous")->required();
  demo->add_option("--system", cfg.system_path, "Control system for the assignment case");
  demo->add_option("--block", cfg.block, "Upper block size k for triangular cases")->capture_default_str();
  demo->add_option("--fills", cfg.fills, "Off-diagonal fills for the symmetric case")->capture_default_str();
  demo->add_option("--substeps", cfg.substeps, "RK4 substeps for the continuous case")->capture_default_str();
  common(demo);
  spectral(demo);
  synthesis(demo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kInputError;
  }
  for (auto* sub : app.get_subcommands()) {
    cfg.command = sub->get_name();
    for (const auto* opt : sub->get_options())
      if (opt->count() > 0) cfg.given.insert(opt->get_name());
  }
  if (threads > 0) set_max_threads(threads);

  try {
    return dispatch(cfg, out, err);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const SynthesisError& e) {
    err << "synthesis error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const ControllabilityError& e) {
    err << "controllability error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const SingularityError& e) {
    err << "singularity: " << e.what() << "\n";
    return kNumericalError;
  } catch (const NumericalRangeError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalError;
  }
}

}  // namespace tvspec::cli
