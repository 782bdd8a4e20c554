#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvspec/assignment.hpp"
#include "tvspec/continuous.hpp"
#include "tvspec/controllability.hpp"
#include "tvspec/lyapunov.hpp"
#include "tvspec/matrix_sequence.hpp"
#include "tvspec/spectrum.hpp"

namespace tvspec::io {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Reading

/// Parses JSON text, turning syntax errors into InputError with line/column.
inline Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size() + 1) && i + 1 < e.byte; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw InputError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                     ": malformed JSON: " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline Json read_json_file(const std::string& path) { return parse_json(read_file(path), path); }

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

namespace detail {

inline const Json& require(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key))
    throw InputError("missing field '" + path + key + "'");
  return obj.at(key);
}

inline double number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw InputError("field '" + path + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw InputError("field '" + path + "' must be finite");
  return x;
}

inline Index integer(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) throw InputError("field '" + path + "' must be an integer");
  return v.get<Index>();
}

}  // namespace detail

/// Accepts a nested row list, a flat row-major list, or (for 1 x 1) a number.
inline Matrix parse_matrix(const Json& v, int rows, int cols, const std::string& path) {
  Matrix m(rows, cols);
  if (v.is_number()) {
    if (rows != 1 || cols != 1)
      throw InputError("field '" + path + "' is a scalar but a " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " matrix is required");
    m(0, 0) = detail::number(v, path);
    return m;
  }
  if (!v.is_array()) throw InputError("field '" + path + "' must be a matrix (array)");
  if (!v.empty() && v.front().is_array()) {
    if (static_cast<int>(v.size()) != rows)
      throw InputError("field '" + path + "' has " + std::to_string(v.size()) + " rows, expected " +
                       std::to_string(rows));
    for (int i = 0; i < rows; ++i) {
      const Json& row = v[static_cast<std::size_t>(i)];
      const std::string rp = path + "[" + std::to_string(i) + "]";
      if (!row.is_array() || static_cast<int>(row.size()) != cols)
        throw InputError("field '" + rp + "' must have " + std::to_string(cols) + " entries");
      for (int j = 0; j < cols; ++j)
        m(i, j) = detail::number(row[static_cast<std::size_t>(j)], rp + "[" + std::to_string(j) + "]");
    }
    return m;
  }
  if (static_cast<int>(v.size()) != rows * cols)
    throw InputError("field '" + path + "' has " + std::to_string(v.size()) +
                     " entries, expected " + std::to_string(rows * cols) + " (row-major)");
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = detail::number(v[static_cast<std::size_t>(i * cols + j)],
                               path + "[" + std::to_string(i * cols + j) + "]");
  return m;
}

inline std::vector<Interval> parse_interval_list(const Json& v, const std::string& path) {
  if (!v.is_array()) throw InputError("field '" + path + "' must be a list of [lo, hi] pairs");
  std::vector<Interval> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || v[i].size() != 2) throw InputError("field '" + p + "' must be [lo, hi]");
    out.push_back({detail::number(v[i][0], p + "[0]"), detail::number(v[i][1], p + "[1]")});
  }
  return out;
}

/// "[-1,-0.5],[0,0]" -> intervals.
inline std::vector<Interval> parse_targets(const std::string& text) {
  Json parsed;
  try {
    parsed = Json::parse("[" + text + "]");
  } catch (const Json::parse_error&) {
    throw InputError("--targets: expected a list like \"[-1,-0.5],[0,0]\", got '" + text + "'");
  }
  return parse_interval_list(parsed, "targets");
}

/// Builds a matrix sequence from {kind, params} with the given shape.
inline MatrixSequence parse_sequence(const std::string& kind, const Json& params, int rows, int cols,
                                     Horizon horizon, std::optional<std::uint64_t> seed,
                                     const std::string& path) {
  if (kind == "constant")
    return constant_sequence(horizon, parse_matrix(detail::require(params, "matrix", path), rows,
                                                   cols, path + "matrix"));
  if (kind == "explicit" || kind == "periodic") {
    const Json& list = detail::require(params, "matrices", path);
    if (!list.is_array() || list.empty())
      throw InputError("field '" + path + "matrices' must be a non-empty list");
    std::vector<Matrix> values;
    values.reserve(list.size());
    for (std::size_t i = 0; i < list.size(); ++i)
      values.push_back(parse_matrix(list[i], rows, cols, path + "matrices[" + std::to_string(i) + "]"));
    if (kind == "periodic") return periodic_sequence(horizon, std::move(values));
    if (static_cast<Index>(values.size()) != horizon.size())
      throw InputError("field '" + path + "matrices' has " + std::to_string(values.size()) +
                       " entries but the horizon needs " + std::to_string(horizon.size()));
    return explicit_sequence(horizon, std::move(values));
  }
  if (kind == "dyadic") {
    if (rows != cols) throw InputError("dyadic sequences are square");
    return dyadic_sequence(horizon,
                           parse_interval_list(detail::require(params, "intervals", path),
                                               path + "intervals"),
                           rows);
  }
  if (kind == "random_bounded") {
    const double scale = params.contains("scale") ? detail::number(params["scale"], path + "scale") : 1.0;
    const double shift =
        params.contains("diag_shift") ? detail::number(params["diag_shift"], path + "diag_shift") : 0.0;
    return random_bounded_sequence(horizon, rows, cols, seed.value_or(0), scale, shift);
  }
  throw InputError("field '" + path + "kind': unknown kind '" + kind +
                   "' (expected explicit, constant, periodic, dyadic, random_bounded)");
}

/// Parsed system-definition file: A (d x d) and optionally B (d x s).
struct SystemDefinition {
  Json source;  // resolved definition (horizon and seed filled in)
  int dim = 0;
  std::optional<int> input_dim;
  Horizon horizon{};
  std::optional<std::uint64_t> seed;
  MatrixSequence A;
  std::optional<MatrixSequence> B;
};

struct SystemOverrides {
  std::optional<Horizon> horizon;
  std::optional<std::uint64_t> seed;
};

inline SystemDefinition load_system(const Json& def, const SystemOverrides& overrides = {}) {
  if (!def.is_object()) throw InputError("system definition must be a JSON object");
  SystemDefinition out;
  out.source = def;
  const Index dim = detail::integer(detail::require(def, "dim", ""), "dim");
  if (dim < 1) throw InputError("field 'dim' must be positive");
  out.dim = static_cast<int>(dim);
  if (def.contains("input_dim")) {
    const Index s = detail::integer(def["input_dim"], "input_dim");
    if (s < 1) throw InputError("field 'input_dim' must be positive");
    out.input_dim = static_cast<int>(s);
  }
  if (overrides.horizon) {
    out.horizon = *overrides.horizon;
  } else if (def.contains("horizon")) {
    const Json& h = def["horizon"];
    out.horizon = make_horizon(detail::integer(detail::require(h, "min", "horizon."), "horizon.min"),
                               detail::integer(detail::require(h, "max", "horizon."), "horizon.max"));
  } else {
    out.horizon = symmetric_horizon();
  }
  if (overrides.seed) {
    out.seed = overrides.seed;
  } else if (def.contains("seed")) {
    out.seed = static_cast<std::uint64_t>(detail::integer(def["seed"], "seed"));
  }
  out.source["horizon"] = {{"min", out.horizon.n_min}, {"max", out.horizon.n_max}};
  if (out.seed) out.source["seed"] = *out.seed;

  const std::string kind = detail::require(def, "kind", "").get<std::string>();
  const Json params = def.value("params", Json::object());
  out.A = parse_sequence(kind, params, out.dim, out.dim, out.horizon, out.seed, "params.");
  if (params.contains("input")) {
    if (!out.input_dim) throw InputError("field 'params.input' requires 'input_dim'");
    const Json& in = params["input"];
    const std::string in_kind = detail::require(in, "kind", "params.input.").get<std::string>();
    std::optional<std::uint64_t> in_seed = out.seed;
    if (in.contains("seed"))
      in_seed = static_cast<std::uint64_t>(detail::integer(in["seed"], "params.input.seed")) +
                (overrides.seed ? *overrides.seed : 0);
    out.B = parse_sequence(in_kind, in.value("params", Json::object()), out.dim, *out.input_dim,
                           out.horizon, in_seed, "params.input.params.");
  } else if (out.input_dim) {
    throw InputError("field 'input_dim' is set but 'params.input' is missing");
  }
  return out;
}

inline ContinuousSystem load_continuous(const Json& def, std::optional<Horizon> override_horizon = {}) {
  if (!def.is_object()) throw InputError("continuous definition must be a JSON object");
  const Index dim = detail::integer(detail::require(def, "dim", ""), "dim");
  if (dim < 1) throw InputError("field 'dim' must be positive");
  Horizon h = symmetric_horizon();
  if (override_horizon) {
    h = *override_horizon;
  } else if (def.contains("horizon")) {
    h = make_horizon(detail::integer(detail::require(def["horizon"], "min", "horizon."), "horizon.min"),
                     detail::integer(detail::require(def["horizon"], "max", "horizon."), "horizon.max"));
  }
  const std::string kind = detail::require(def, "kind", "").get<std::string>();
  const Json params = def.value("params", Json::object());
  const int d = static_cast<int>(dim);
  if (kind == "piecewise_constant") {
    std::vector<Matrix> table;
    if (params.contains("table")) {
      const Json& t = params["table"];
      if (!t.is_array()) throw InputError("field 'params.table' must be a list");
      for (std::size_t i = 0; i < t.size(); ++i)
        table.push_back(parse_matrix(t[i], d, d, "params.table[" + std::to_string(i) + "]"));
    } else if (params.contains("periodic_table")) {
      const Json& t = params["periodic_table"];
      if (!t.is_array() || t.empty()) throw InputError("field 'params.periodic_table' must be a non-empty list");
      std::vector<Matrix> cycle;
      for (std::size_t i = 0; i < t.size(); ++i)
        cycle.push_back(parse_matrix(t[i], d, d, "params.periodic_table[" + std::to_string(i) + "]"));
      const auto period = static_cast<Index>(cycle.size());
      for (Index n = h.n_min; n <= h.n_max; ++n)
        table.push_back(cycle[static_cast<std::size_t>(((n % period) + period) % period)]);
    } else {
      throw InputError("piecewise_constant needs 'params.table' or 'params.periodic_table'");
    }
    return ContinuousSystem::piecewise_constant(h, std::move(table));
  }
  if (kind == "builtin_callable") {
    const std::string name = detail::require(params, "name", "params.").get<std::string>();
    auto num = [&](const char* key, double fallback) {
      return params.contains(key) ? detail::number(params[key], std::string("params.") + key) : fallback;
    };
    if (name == "rotation") {
      if (d != 2) throw InputError("builtin 'rotation' is two-dimensional");
      return rotation_system(h, num("omega", 1.0), num("rate", 0.0));
    }
    if (name == "sinusoidal_diagonal") {
      std::vector<double> rates(static_cast<std::size_t>(d), 0.0);
      if (params.contains("rates")) {
        const Json& r = params["rates"];
        if (!r.is_array() || static_cast<int>(r.size()) != d)
          throw InputError("field 'params.rates' must list " + std::to_string(d) + " numbers");
        for (int i = 0; i < d; ++i)
          rates[static_cast<std::size_t>(i)] =
              detail::number(r[static_cast<std::size_t>(i)], "params.rates[" + std::to_string(i) + "]");
      }
      return sinusoidal_diagonal_system(h, std::move(rates), num("amplitude", 0.5));
    }
    if (name == "coupled_triangular") {
      if (d != 2) throw InputError("builtin 'coupled_triangular' is two-dimensional");
      return coupled_triangular_system(h, num("a", -0.5), num("b", 0.5), num("c", 1.0));
    }
    throw InputError("field 'params.name': unknown builtin '" + name +
                     "' (expected rotation, sinusoidal_diagonal, coupled_triangular)");
  }
  throw InputError("field 'kind': unknown continuous kind '" + kind +
                   "' (expected piecewise_constant, builtin_callable)");
}

// ---------------------------------------------------------------------------
// Writing

inline Json to_json(const Horizon& h) { return {{"min", h.n_min}, {"max", h.n_max}}; }

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const std::vector<Interval>& set) {
  Json out = Json::array();
  for (const auto& iv : set) out.push_back({iv.lo, iv.hi});
  return out;
}

/// Explicit sequence with row-major flat matrices.
inline Json sequence_to_json(const MatrixSequence& m) {
  Json mats = Json::array();
  for (Index n = m.horizon().n_min; n <= m.horizon().n_max; ++n) {
    const Matrix v = m.at(n);
    Json flat = Json::array();
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) flat.push_back(v(i, j));
    mats.push_back(std::move(flat));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"horizon", to_json(m.horizon())},
          {"kind", "explicit"}, {"matrices", std::move(mats)}};
}

inline MatrixSequence sequence_from_json(const Json& v, const std::string& path) {
  const auto rows = static_cast<int>(detail::integer(detail::require(v, "rows", path), path + "rows"));
  const auto cols = static_cast<int>(detail::integer(detail::require(v, "cols", path), path + "cols"));
  const Json& h = detail::require(v, "horizon", path);
  const Horizon horizon =
      make_horizon(detail::integer(detail::require(h, "min", path + "horizon."), path + "horizon.min"),
                   detail::integer(detail::require(h, "max", path + "horizon."), path + "horizon.max"));
  return parse_sequence("explicit", v, rows, cols, horizon, std::nullopt, path);
}

/// System-definition file holding an explicit sequence (used by `discretize`).
inline Json explicit_system_json(const MatrixSequence& m) {
  Json seq = sequence_to_json(m);
  return {{"dim", m.rows()}, {"horizon", seq["horizon"]}, {"kind", "explicit"},
          {"params", {{"matrices", std::move(seq["matrices"])}}}};
}

inline Json to_json(const EDVerdict& v) {
  return {{"gamma", v.gamma},           {"has_ed", v.has_ed},
          {"unstable_dim", v.unstable_dim}, {"projector_rank", v.projector_rank},
          {"fitted_K", v.fitted_K},     {"log_K", v.log_K},
          {"fitted_alpha", v.fitted_alpha}, {"margin", v.margin}};
}

inline Json to_json(const SpectrumEstimate& e) {
  Json out = {{"intervals", to_json(e.intervals)},
              {"side", to_string(e.side)},
              {"method", to_string(e.method)},
              {"window_length", e.window_length},
              {"grid_step", e.grid_step},
              {"gap_threshold", e.gap_threshold},
              {"horizon", to_json(e.horizon)}};
  if (!e.verdicts.empty()) {
    Json table = Json::array();
    for (const auto& v : e.verdicts) table.push_back(to_json(v));
    out["verdicts"] = std::move(table);
  }
  return out;
}

inline Json to_json(const UccCertificate& c) {
  return {{"K", c.K},
          {"alpha", c.alpha},
          {"min_gramian_eig", c.min_gramian_eig},
          {"max_gramian_eig", c.max_gramian_eig},
          {"floor", c.floor},
          {"worst_window_start", c.worst_window_start},
          {"ok", c.ok}};
}

inline Json to_json(const LyapunovValidation& v) {
  Json out = {{"norm_bound", v.norm_bound},
              {"inverse_norm_bound", v.inverse_norm_bound},
              {"min_singular_value", v.min_singular_value},
              {"ok", v.ok},
              {"failing_count", v.failing_count}};
  out["first_failing_index"] = v.first_failing_index ? Json(*v.first_failing_index) : Json(nullptr);
  return out;
}

inline Json to_json(const Verification& v) {
  return {{"estimate", to_json(v.estimate)},
          {"targets", to_json(v.targets)},
          {"tolerance", v.tolerance},
          {"max_endpoint_error", v.max_endpoint_error},
          {"passed", v.passed}};
}

/// "n,mu_1,...,mu_d" rows for plotting window-exponent curves.
inline std::string window_exponents_csv(const WindowExponentTable& table) {
  std::ostringstream out;
  out.precision(17);
  out << "n";
  for (int i = 1; i <= table.dim(); ++i) out << ",mu_" << i;
  out << "\n";
  for (Index row = 0; row < table.rows(); ++row) {
    out << table.start(row);
    for (int i = 0; i < table.dim(); ++i) out << "," << table.values(row, i);
    out << "\n";
  }
  return out.str();
}

}  // namespace tvspec::io
