#include "ahe/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ahe/error.hpp"
#include "ahe/field_io.hpp"
#include "ahe/forms.hpp"
#include "ahe/synthetic.hpp"

namespace ahe {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_real(const std::string& s, const std::string& token) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "not a number: '" + token + "'");
  }
  if (used != s.size()) throw Error(ErrorCode::ConfigError, "not a number: '" + token + "'");
  return v;
}

cd parse_complex(const std::string& token) {
  if (token.empty() || (token.back() != 'i' && token.back() != 'j')) return parse_real(token, token);
  const std::string body = token.substr(0, token.size() - 1);
  // Split at the last sign that is not a leading sign or an exponent sign.
  std::size_t split = std::string::npos;
  for (std::size_t k = body.size(); k-- > 1;)
    if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') {
      split = k;
      break;
    }
  auto imag = [&](const std::string& s) {
    if (s.empty() || s == "+") return 1.0;
    if (s == "-") return -1.0;
    return parse_real(s, token);
  };
  if (split == std::string::npos) return {0.0, imag(body)};
  return {parse_real(body.substr(0, split), token), imag(body.substr(split))};
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(ErrorCode::ConfigError, origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError, origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::ConfigError, origin + ":" + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (kv.values_.count(full))
      throw Error(ErrorCode::ConfigError, origin + ":" + std::to_string(lineno) + ": duplicate key " + full);
    kv.values_[full] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string KeyValueFile::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::ConfigError, origin_ + ": missing key " + key);
  return it->second;
}

std::string KeyValueFile::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueFile::number(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  return parse_real(v, key + " = " + v);
}

int KeyValueFile::integer(const std::string& key, int fallback) const {
  const double v = number(key, fallback);
  if (v != static_cast<double>(static_cast<int>(v)))
    throw Error(ErrorCode::ConfigError, origin_ + ": " + key + " must be an integer");
  return static_cast<int>(v);
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::vector<cd> parse_numbers(const std::string& text) {
  std::string s = text;
  for (char& c : s)
    if (c == ',' || c == ';' || c == '[' || c == ']') c = ' ';
  std::istringstream in(s);
  std::vector<cd> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_complex(tok));
  return out;
}

Mat parse_matrix(const std::string& text, int rows, int cols) {
  const auto v = parse_numbers(text);
  if (static_cast<int>(v.size()) != rows * cols)
    throw Error(ErrorCode::ConfigError, "expected " + std::to_string(rows * cols) + " matrix entries, got " +
                                            std::to_string(v.size()));
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i * cols + j)];
  return m;
}

RunConfig parse_config(const KeyValueFile& kv, const std::string& base_dir) {
  static const char* known[] = {"torus.dim",          "torus.N",           "torus.backend",
                                "metric.type",        "metric.matrix",     "metric.amplitude",
                                "metric.axis",        "metric.path",       "bundle.rank",
                                "bundle.field",       "background.amplitude", "solver.factor",
                                "solver.eps_min",     "solver.newton_tol", "solver.max_newton",
                                "solver.max_steps",   "solver.m_max",      "destabilizer.min_gap",
                                "destabilizer.defect_tol", "destabilizer.snap_tol", "output.dir",
                                "run.seed"};
  for (const auto& k : kv.keys()) {
    bool ok = k.rfind("bundle.monodromy", 0) == 0;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) throw Error(ErrorCode::ConfigError, "unknown config key " + k);
  }
  RunConfig c;
  c.dim = kv.integer("torus.dim", 1);
  c.resolution = kv.integer("torus.N", 32);
  if (c.dim < 1 || c.dim > kMaxDim) throw Error(ErrorCode::ConfigError, "torus.dim must be 1.." + std::to_string(kMaxDim));
  if (c.resolution < 4) throw Error(ErrorCode::ConfigError, "torus.N must be at least 4");
  const std::string backend = kv.get("torus.backend", "fd");
  if (backend == "fd") c.backend = DerivativeBackend::FiniteDifference;
  else if (backend == "spectral") c.backend = DerivativeBackend::Spectral;
  else throw Error(ErrorCode::ConfigError, "torus.backend must be fd or spectral");

  c.metric.type = kv.get("metric.type", "constant");
  if (c.metric.type == "constant") {
    c.metric.matrix = RealMat::Identity(c.dim, c.dim);
    if (kv.has("metric.matrix")) {
      const Mat m = parse_matrix(kv.get("metric.matrix"), c.dim, c.dim);
      if (m.imag().norm() != 0.0) throw Error(ErrorCode::ConfigError, "metric.matrix must be real");
      c.metric.matrix = m.real();
    }
  } else if (c.metric.type == "sine-conformal") {
    c.metric.amplitude = kv.number("metric.amplitude", 0.3);
    c.metric.axis = kv.integer("metric.axis", 0);
    if (std::abs(c.metric.amplitude) >= 1.0) throw Error(ErrorCode::ConfigError, "metric.amplitude must lie in (-1, 1)");
    if (c.metric.axis < 0 || c.metric.axis >= c.dim) throw Error(ErrorCode::ConfigError, "metric.axis out of range");
  } else if (c.metric.type == "file") {
    const std::filesystem::path p(kv.get("metric.path"));
    c.metric.path = p.is_absolute() ? p.string() : (std::filesystem::path(base_dir) / p).string();
    if (!std::filesystem::exists(c.metric.path))
      throw Error(ErrorCode::ConfigError, "metric file " + c.metric.path + " does not exist");
  } else {
    throw Error(ErrorCode::ConfigError, "metric.type must be constant, sine-conformal or file");
  }

  c.bundle.rank = kv.integer("bundle.rank", 1);
  if (c.bundle.rank < 1 || c.bundle.rank > kMaxRank)
    throw Error(ErrorCode::ConfigError, "bundle.rank must be 1.." + std::to_string(kMaxRank));
  const std::string field = kv.get("bundle.field", "complex");
  if (field == "complex") c.bundle.field = FieldKind::Complex;
  else if (field == "real") c.bundle.field = FieldKind::Real;
  else throw Error(ErrorCode::ConfigError, "bundle.field must be real or complex");
  for (int k = 0; k < c.dim; ++k) {
    const std::string key = "bundle.monodromy" + std::to_string(k);
    c.bundle.monodromy.push_back(kv.has(key) ? parse_matrix(kv.get(key), c.bundle.rank, c.bundle.rank)
                                             : Mat(Mat::Identity(c.bundle.rank, c.bundle.rank)));
  }
  for (const auto& k : kv.keys())
    if (k.rfind("bundle.monodromy", 0) == 0) {
      const std::string idx = k.substr(std::string("bundle.monodromy").size());
      if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos || std::stoi(idx) >= c.dim)
        throw Error(ErrorCode::ConfigError, "unexpected key " + k);
    }

  c.background_amplitude = kv.number("background.amplitude", 0.0);
  if (c.background_amplitude < 0.0) throw Error(ErrorCode::ConfigError, "background.amplitude must be >= 0");

  SolverOptions& s = c.solver;
  s.factor = kv.number("solver.factor", s.factor);
  s.eps_min = kv.number("solver.eps_min", s.eps_min);
  s.newton_tol = kv.number("solver.newton_tol", s.newton_tol);
  s.max_newton = kv.integer("solver.max_newton", s.max_newton);
  s.max_steps = kv.integer("solver.max_steps", s.max_steps);
  s.m_max = kv.number("solver.m_max", s.m_max);
  if (!(s.factor > 0.0 && s.factor < 1.0)) throw Error(ErrorCode::ConfigError, "solver.factor must lie in (0, 1)");
  if (!(s.eps_min > 0.0 && s.eps_min < 1.0)) throw Error(ErrorCode::ConfigError, "solver.eps_min must lie in (0, 1)");
  if (!(s.newton_tol > 0.0)) throw Error(ErrorCode::ConfigError, "solver.newton_tol must be positive");
  if (s.max_newton < 1 || s.max_steps < 1) throw Error(ErrorCode::ConfigError, "solver iteration caps must be positive");
  if (!(s.m_max > 0.0)) throw Error(ErrorCode::ConfigError, "solver.m_max must be positive");

  DestabilizerOptions& d = c.destabilizer;
  d.min_gap = kv.number("destabilizer.min_gap", d.min_gap);
  d.defect_tol = kv.number("destabilizer.defect_tol", d.defect_tol);
  d.snap_tol = kv.number("destabilizer.snap_tol", d.snap_tol);

  c.out_dir = kv.get("output.dir", c.out_dir);
  const int seed = kv.integer("run.seed", 1);
  if (seed < 0) throw Error(ErrorCode::ConfigError, "run.seed must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  return c;
}

RunConfig load_config(const std::string& path) {
  return parse_config(KeyValueFile::load(path), std::filesystem::path(path).parent_path().string());
}

AffineTorus make_torus(const RunConfig& c) { return AffineTorus(c.dim, c.resolution, c.backend); }

MetricField make_metric(const RunConfig& c, const AffineTorus& t) {
  if (c.metric.type == "constant") return constant_metric(t, c.metric.matrix);
  if (c.metric.type == "sine-conformal") return sine_conformal_metric(t, c.metric.amplitude, c.metric.axis);
  MetricField g = to_metric(load_field(c.metric.path), t);
  for (std::size_t x = 0; x < g.size(); ++x) {
    Eigen::SelfAdjointEigenSolver<RealMat> es(g[x]);
    if ((g[x] - g[x].transpose()).norm() > 1e-12 * g[x].norm() || es.eigenvalues().minCoeff() <= 0.0)
      throw Error(ErrorCode::ConfigError, "metric file is not positive definite at point " + std::to_string(x));
  }
  return g;
}

FlatBundle make_bundle(const RunConfig& c) { return FlatBundle::build(c.bundle.monodromy, c.bundle.field); }

HermitianField make_background(const RunConfig& c, const FlatBundle& b, const AffineTorus& t) {
  if (c.background_amplitude == 0.0) return background_metric(b, t);
  Rng rng(c.seed);
  const HermitianField P =
      random_periodic_hpd(t, b.rank(), rng, c.background_amplitude, b.field() == FieldKind::Real);
  return background_metric(b, t, &P);
}

}  // namespace ahe
