#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ahe/bundle.hpp"
#include "ahe/continuation.hpp"
#include "ahe/destabilizer.hpp"

namespace ahe {

// Sectioned key = value text; '#' starts a comment. Keys are stored as "section.key".
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "config");
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  std::vector<std::string> keys() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
};

// Whitespace, comma or semicolon separated entries; each entry is real or complex ("1.5-2i", "3i").
std::vector<cd> parse_numbers(const std::string& text);
Mat parse_matrix(const std::string& text, int rows, int cols);

struct MetricSpec {
  std::string type = "constant";  // constant | sine-conformal | file
  RealMat matrix;                 // constant
  double amplitude = 0.3;         // sine-conformal
  int axis = 0;
  std::string path;               // file
};

struct BundleSpec {
  int rank = 1;
  FieldKind field = FieldKind::Complex;
  std::vector<Mat> monodromy;
};

struct RunConfig {
  int dim = 1;
  int resolution = 32;
  DerivativeBackend backend = DerivativeBackend::FiniteDifference;
  MetricSpec metric;
  BundleSpec bundle;
  double background_amplitude = 0.0;  // random periodic factor of the background metric
  SolverOptions solver;
  DestabilizerOptions destabilizer;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

RunConfig parse_config(const KeyValueFile& kv, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

AffineTorus make_torus(const RunConfig& c);
MetricField make_metric(const RunConfig& c, const AffineTorus& t);
FlatBundle make_bundle(const RunConfig& c);
HermitianField make_background(const RunConfig& c, const FlatBundle& b, const AffineTorus& t);

}  // namespace ahe
