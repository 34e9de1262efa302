#include "ahe/field_io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ahe/error.hpp"

namespace ahe {

namespace {

template <class M>
void write_values(std::ostream& out, const AffineTorus& t, const std::string& type, int rank,
                  const std::vector<M>& values) {
  out << t.dim() << ' ' << t.resolution() << ' ' << type << ' ' << rank << '\n';
  char buf[64];
  for (const auto& m : values) {
    for (int i = 0; i < rank; ++i)
      for (int j = 0; j < rank; ++j) {
        const cd v = m(i, j);
        std::snprintf(buf, sizeof buf, "%.17g %.17g", v.real(), v.imag());
        out << (i + j ? " " : "") << buf;
      }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed to write a field dump");
}

void check_grid(const FieldDump& d, const AffineTorus& t, const std::string& type) {
  if (d.type != type) throw Error(ErrorCode::IoError, "field dump has type " + d.type + ", expected " + type);
  if (d.dim != t.dim() || d.resolution != t.resolution())
    throw Error(ErrorCode::IoError, "field dump grid " + std::to_string(d.dim) + "x" + std::to_string(d.resolution) +
                                        " does not match the torus");
}

}  // namespace

void write_field(std::ostream& out, const AffineTorus& t, const ScalarField& f) {
  std::vector<Mat> v;
  v.reserve(f.size());
  for (const cd& z : f) v.push_back(Mat::Constant(1, 1, z));
  write_values(out, t, "scalar", 1, v);
}

void write_field(std::ostream& out, const AffineTorus& t, const MetricField& f) {
  write_values(out, t, "metric", t.dim(), f.values());
}

void write_field(std::ostream& out, const AffineTorus& t, const HermitianField& f) {
  write_values(out, t, "hermitian", f.size() ? static_cast<int>(f[0].rows()) : 0, f.values());
}

void write_field(std::ostream& out, const AffineTorus& t, const EndField& f) {
  write_values(out, t, "end", f.size() ? static_cast<int>(f[0].rows()) : 0, f.values());
}

FieldDump read_field(std::istream& in) {
  FieldDump d;
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::IoError, "empty field dump");
  std::istringstream hs(header);
  if (!(hs >> d.dim >> d.resolution >> d.type >> d.rank) || d.dim < 1 || d.dim > kMaxDim || d.resolution < 1 ||
      d.rank < 1 || d.rank > kMaxRank)
    throw Error(ErrorCode::IoError, "malformed field dump header '" + header + "'");
  std::size_t points = 1;
  for (int k = 0; k < d.dim; ++k) points *= static_cast<std::size_t>(d.resolution);
  d.values.reserve(points);
  for (std::size_t x = 0; x < points; ++x) {
    Mat m(d.rank, d.rank);
    for (int i = 0; i < d.rank; ++i)
      for (int j = 0; j < d.rank; ++j) {
        double re = 0.0, im = 0.0;
        if (!(in >> re >> im)) throw Error(ErrorCode::IoError, "field dump truncated at point " + std::to_string(x));
        m(i, j) = cd(re, im);
      }
    d.values.push_back(m);
  }
  return d;
}

template <class Field>
void save_field(const std::string& path, const AffineTorus& t, const Field& f) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_field(out, t, f);
}

template void save_field(const std::string&, const AffineTorus&, const ScalarField&);
template void save_field(const std::string&, const AffineTorus&, const MetricField&);
template void save_field(const std::string&, const AffineTorus&, const HermitianField&);
template void save_field(const std::string&, const AffineTorus&, const EndField&);

FieldDump load_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_field(in);
}

ScalarField to_scalar(const FieldDump& d, const AffineTorus& t) {
  check_grid(d, t, "scalar");
  ScalarField f(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) f[x] = d.values[x](0, 0);
  return f;
}

MetricField to_metric(const FieldDump& d, const AffineTorus& t) {
  check_grid(d, t, "metric");
  if (d.rank != t.dim()) throw Error(ErrorCode::IoError, "metric dump rank differs from the torus dimension");
  MetricField g(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) {
    if (d.values[x].imag().norm() != 0.0) throw Error(ErrorCode::IoError, "metric dump has imaginary entries");
    g[x] = d.values[x].real();
  }
  return g;
}

HermitianField to_hermitian(const FieldDump& d, const AffineTorus& t) {
  check_grid(d, t, "hermitian");
  HermitianField f(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) f[x] = d.values[x];
  return f;
}

EndField to_end(const FieldDump& d, const AffineTorus& t) {
  check_grid(d, t, "end");
  EndField f(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) f[x] = d.values[x];
  return f;
}

}  // namespace ahe
