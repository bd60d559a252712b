#pragma once
// Run-config parsing.  A Reader walks a JSON object, records every value it
// hands out (defaults included) into a resolved copy, and rejects keys it
// was never asked for, so the echoed config is complete and typo-free.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gibbslab/entropy_gap.hpp"
#include "gibbslab/interactions.hpp"
#include "gibbslab/observables.hpp"

namespace gibbslab {

// std::map-backed so references handed to child readers stay valid.
using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parses JSON text; syntax errors carry "source:line:column".
inline json parse_config_text(const std::string& text, const std::string& source = "<config>") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    if (const auto p = what.find(": "); p != std::string::npos) what = what.substr(p + 2);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON: " + what);
  }
}

inline json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

class Reader {
 public:
  Reader(const json& in, json& out, std::string path) : in_(in), out_(out), path_(std::move(path)) {
    if (!in_.is_object()) throw ConfigError(path_ + ": expected an object");
    if (!out_.is_object()) out_ = json::object();
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return in_.contains(key); }

  template <class T>
  T get(const std::string& key) {
    if (!in_.contains(key)) throw ConfigError(where(key) + ": required field missing");
    return take<T>(key);
  }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    if (!in_.contains(key)) {
      used_.insert(key);
      out_[key] = fallback;
      return fallback;
    }
    return take<T>(key);
  }

  Reader child(const std::string& key) {
    if (!in_.contains(key)) throw ConfigError(where(key) + ": required object missing");
    used_.insert(key);
    if (!out_.contains(key)) out_[key] = json::object();
    return Reader(in_.at(key), out_[key], where(key));
  }

  /// Child object, created empty when absent so its defaults are still echoed.
  Reader child_or_empty(const std::string& key) {
    used_.insert(key);
    if (!out_.contains(key)) out_[key] = json::object();
    return Reader(in_.contains(key) ? in_.at(key) : empty_object(), out_[key], where(key));
  }

  /// Array of objects under `key`; `fn` gets one Reader per element and is
  /// responsible for calling finish() on it.
  template <class Fn>
  void for_each_object(const std::string& key, Fn&& fn) {
    if (!in_.contains(key)) throw ConfigError(where(key) + ": required array missing");
    used_.insert(key);
    const json& arr = in_.at(key);
    if (!arr.is_array() || arr.empty()) throw ConfigError(where(key) + ": expected a nonempty array");
    out_[key] = json::array();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      json slot = json::object();
      Reader r(arr[i], slot, where(key) + "[" + std::to_string(i) + "]");
      fn(r);
      out_[key].push_back(slot);
    }
  }

  /// Rejects keys that were never read.
  void finish() const {
    for (const auto& [k, v] : in_.items())
      if (!used_.count(k)) throw ConfigError(where(k) + ": unknown field");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const { throw ConfigError(where(key) + ": " + msg); }

 private:
  static const json& empty_object() {
    static const json e = json::object();
    return e;
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

  template <class T>
  T take(const std::string& key) {
    used_.insert(key);
    const json& v = in_.at(key);
    try {
      check_type<T>(v);
      T value = v.get<T>();
      out_[key] = value;
      return value;
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": wrong type (" + e.what() + ")");
    }
  }

  template <class T>
  static void check_type(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("expected boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigError("expected a nonnegative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("expected a string");
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw ConfigError("expected an array of numbers");
      for (const auto& x : v)
        if (!x.is_number()) throw ConfigError("expected an array of numbers");
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) throw ConfigError("expected an array of strings");
      for (const auto& x : v)
        if (!x.is_string()) throw ConfigError("expected an array of strings");
    }
  }

  const json& in_;
  json& out_;
  std::string path_;
  std::set<std::string> used_;
};

template <class T>
T req(Reader& r, const std::string& key) {
  return r.get<T>(key);
}
template <class T>
T opt(Reader& r, const std::string& key, const T& fallback) {
  return r.get<T>(key, fallback);
}

inline double positive(Reader& r, const std::string& key, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) r.fail(key, "must be a positive finite number");
  return v;
}

/// {"half_side": n, "dim": d, "boundary": "periodic"|"free"}
inline Window window_from_config(Reader r) {
  const double n = positive(r, "half_side", req<double>(r, "half_side"));
  const int d = opt<int>(r, "dim", 2);
  if (d < 1 || d > 3) r.fail("dim", "must be 1, 2 or 3");
  const auto b = opt<std::string>(r, "boundary", "periodic");
  if (b != "periodic" && b != "free") r.fail("boundary", "must be \"periodic\" or \"free\"");
  r.finish();
  return Window(n, d, boundary_from_string(b));
}

/// {"kind": "none"} | {"kind": "strauss", "strength", "range"}
/// | {"kind": "soft_core", "amplitude", "range"}  phi(r) = amplitude (1 - r/range)^2
/// | {"kind": "area", "gamma", "radius", "quad_resolution"}
/// | {"kind": "superstable", "hard_core", "well_depth", "range"}  square well
inline Interaction interaction_from_config(Reader r, int dim) {
  const auto kind = opt<std::string>(r, "kind", "none");
  Interaction out;
  if (kind == "none") {
    out = Interaction();
  } else if (kind == "strauss") {
    const double s = req<double>(r, "strength");
    if (!(s >= 0.0)) r.fail("strength", "must be >= 0");
    out = strauss(s, positive(r, "range", req<double>(r, "range")));
  } else if (kind == "soft_core") {
    const double a = req<double>(r, "amplitude");
    if (!(a >= 0.0)) r.fail("amplitude", "must be >= 0");
    const double range = positive(r, "range", req<double>(r, "range"));
    out = Interaction(PairPotential::soft_core([a, range](double x) { return a * (1.0 - x / range) * (1.0 - x / range); }, range));
  } else if (kind == "area") {
    const double g = req<double>(r, "gamma");
    if (g == 0.0 || !std::isfinite(g)) r.fail("gamma", "must be finite and nonzero");
    const double radius = positive(r, "radius", req<double>(r, "radius"));
    const int res = opt<int>(r, "quad_resolution", 256);
    if (res < 1) r.fail("quad_resolution", "must be >= 1");
    if (dim != 2) r.fail("kind", "area interaction requires dim = 2");
    out = area_interaction(g, radius, res);
  } else if (kind == "superstable") {
    const double sigma = req<double>(r, "hard_core");
    if (!(sigma >= 0.0)) r.fail("hard_core", "must be >= 0");
    const double depth = req<double>(r, "well_depth");
    const double range = positive(r, "range", req<double>(r, "range"));
    if (!(range > sigma)) r.fail("range", "must exceed hard_core");
    out = square_well(sigma, depth, range, dim);
  } else {
    r.fail("kind", "unknown interaction kind \"" + kind + "\"");
  }
  r.finish();
  return out;
}

/// {"family": "tent"|"box", "amplitude", "radius", "sign": +1|-1}
inline Kernel kernel_from_config(Reader r, int dim) {
  const auto family = opt<std::string>(r, "family", "tent");
  const double a = req<double>(r, "amplitude");
  if (!(a >= 0.0)) r.fail("amplitude", "must be >= 0");
  const double radius = positive(r, "radius", req<double>(r, "radius"));
  const int sign = opt<int>(r, "sign", 1);
  if (sign != 1 && sign != -1) r.fail("sign", "must be +1 or -1");
  r.finish();
  if (family == "tent") return Kernel::tent(a, radius, sign, dim);
  if (family == "box") return Kernel::box(a, radius, sign, dim);
  r.fail("family", "must be \"tent\" or \"box\"");
}

inline std::vector<double> lambda_grid_from_config(Reader& r, const std::string& key = "lambda_grid") {
  const auto g = opt<std::vector<double>>(r, key, default_lambda_grid());
  if (g.empty()) r.fail(key, "must be nonempty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] >= 0.0)) r.fail(key, "values must be >= 0");
    if (i > 0 && !(g[i] > g[i - 1])) r.fail(key, "must be strictly increasing");
  }
  return g;
}

/// Shared CSV schema for estimator and tail outputs.
class EstimatorCsv {
 public:
  explicit EstimatorCsv(std::ostream& os, std::uint64_t seed) : os_(os), seed_(seed) {
    os_ << "schema_version,quantity,lambda,value,std_error,n_samples,seed\n";
    os_ << std::setprecision(17);
  }
  void row(const std::string& quantity, double lambda, double value, double std_error, std::size_t n_samples) {
    os_ << kSchemaVersion << ',' << quantity << ',' << num(lambda) << ',' << num(value) << ',' << num(std_error) << ','
        << n_samples << ',' << seed_ << '\n';
  }

  static std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
  }

 private:
  std::ostream& os_;
  std::uint64_t seed_;
};

/// JSON number or null for non-finite values.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const DvBoundReport& r) {
  json j;
  j["mode"] = r.mode == DvMode::analytic ? "analytic" : "empirical";
  j["rho"] = finite_or_null(r.rho);
  j["rho_std_error"] = finite_or_null(r.rho_std_error);
  j["beta"] = finite_or_null(r.beta);
  j["c_nu"] = r.mode == DvMode::analytic ? finite_or_null(r.c_nu) : json(nullptr);
  j["lambda_star"] = finite_or_null(r.lambda_star);
  j["bound_value"] = finite_or_null(r.bound_value);
  j["bound_std_error"] = finite_or_null(r.bound_std_error);
  j["kernel"] = {{"id", r.kernel_id}, {"sign", r.kernel_sign}, {"radius", r.kernel_radius}};
  j["n"] = r.n;
  j["n_plus_r"] = r.n_plus_r;
  if (r.mode == DvMode::empirical) {
    j["lambda_grid"] = r.lambda_grid;
    json pl = json::array();
    for (double v : r.per_lambda) pl.push_back(finite_or_null(v));
    j["per_lambda"] = pl;
    j["overflow"] = r.overflow;
    // The maximiser sits on the last grid point: a longer grid may raise the bound.
    j["lambda_star_at_grid_edge"] = !r.lambda_grid.empty() && r.lambda_star == r.lambda_grid.back();
  }
  j["n_samples"] = r.n_samples;
  return j;
}

}  // namespace gibbslab
