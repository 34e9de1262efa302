#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ahe/grid.hpp"

namespace ahe {

// Columnar dump: header "dim N type rank", then one line per grid point holding the row-major
// matrix entries as "re im" pairs. Types: scalar, metric, hermitian, end.
struct FieldDump {
  int dim = 1;
  int resolution = 0;
  std::string type;
  int rank = 1;
  std::vector<Mat> values;
};

void write_field(std::ostream& out, const AffineTorus& t, const ScalarField& f);
void write_field(std::ostream& out, const AffineTorus& t, const MetricField& f);
void write_field(std::ostream& out, const AffineTorus& t, const HermitianField& f);
void write_field(std::ostream& out, const AffineTorus& t, const EndField& f);
FieldDump read_field(std::istream& in);

template <class Field>
void save_field(const std::string& path, const AffineTorus& t, const Field& f);
FieldDump load_field(const std::string& path);

// Conversions check the type tag and the grid.
ScalarField to_scalar(const FieldDump& d, const AffineTorus& t);
MetricField to_metric(const FieldDump& d, const AffineTorus& t);
HermitianField to_hermitian(const FieldDump& d, const AffineTorus& t);
EndField to_end(const FieldDump& d, const AffineTorus& t);

}  // namespace ahe
