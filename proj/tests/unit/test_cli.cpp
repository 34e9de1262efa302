#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ahe/cli.hpp"
#include "ahe/config.hpp"
#include "ahe/error.hpp"
#include "ahe/field_io.hpp"
#include "ahe/synthetic.hpp"
#include "doctest.h"

using namespace ahe;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ahe_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  std::ofstream(dir / name) << text;
  return dir / name;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream o, e;
  const int code = run_command(args, o, e);
  return {code, o.str(), e.str()};
}

const char* kTrivial = R"([torus]
dim = 1
N = 32
[bundle]
rank = 1
monodromy0 = 1
[background]
amplitude = 0.3
[run]
seed = 3
)";

const char* kUnipotent = R"([torus]
dim = 1
N = 32
[bundle]
rank = 2
monodromy0 = 1 1; 0 1
)";

const char* kRotation = R"([torus]
N = 16
[bundle]
rank = 2
field = real
monodromy0 = -0.26625534204141565 -0.9639025328498773; 0.9639025328498773 -0.26625534204141565
)";

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("numbers") {
    const auto v = parse_numbers("1, -2.5; 0.5+2i 3i -i 1e-3-4e+2i");
    REQUIRE(v.size() == 6);
    CHECK(v[1] == cd(-2.5, 0));
    CHECK(v[2] == cd(0.5, 2));
    CHECK(v[3] == cd(0, 3));
    CHECK(v[4] == cd(0, -1));
    CHECK(v[5] == cd(1e-3, -4e2));
    CHECK_THROWS_AS(parse_numbers("1 x"), Error);
  }
  SUBCASE("sections and defaults") {
    const RunConfig c = parse_config(KeyValueFile::parse(kUnipotent));
    CHECK(c.dim == 1);
    CHECK(c.resolution == 32);
    CHECK(c.bundle.rank == 2);
    CHECK(c.bundle.monodromy[0](0, 1) == cd(1, 0));
    CHECK(c.metric.type == "constant");
    CHECK(c.solver.m_max == 25.0);
  }
  SUBCASE("validation") {
    auto bad = [](const std::string& text) {
      try {
        parse_config(KeyValueFile::parse(text));
      } catch (const Error& e) {
        return e.code() == ErrorCode::ConfigError;
      }
      return false;
    };
    CHECK(bad("[torus]\ndim = 4\n"));
    CHECK(bad("[torus]\nN = 2\n"));
    CHECK(bad("[bundle]\nrank = 2\nmonodromy0 = 1 2 3\n"));
    CHECK(bad("[bundle]\nmonodromy1 = 1\n"));
    CHECK(bad("[solver]\nfactor = 1.5\n"));
    CHECK(bad("[metric]\ntype = file\npath = /nonexistent/metric.field\n"));
    CHECK(bad("[typo]\nkey = 1\n"));
    CHECK(bad("[torus]\ndim = 1\ndim = 2\n"));
    CHECK(bad("no equals sign\n"));
  }
}

TEST_CASE("field dumps round trip") {
  const AffineTorus t(2, 8);
  Rng rng(1);
  const FlatBundle b = FlatBundle::build({random_matrix(2, rng, 0.3, false), Mat::Identity(2, 2)});
  const HermitianField H = random_twisted_metric(b, t, rng, 0.3);
  std::stringstream ss;
  write_field(ss, t, H);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header == "2 8 hermitian 2");
  const HermitianField back = to_hermitian(read_field(ss), t);
  for (std::size_t x = 0; x < t.size(); ++x) CHECK((back[x] - H[x]).norm() == 0.0);
  std::stringstream s2;
  write_field(s2, t, H);
  CHECK_THROWS_AS(to_end(read_field(s2), t), Error);
  std::stringstream s3("1 8 end 2\n1 0 0 0\n");
  CHECK_THROWS_AS(read_field(s3), Error);
}

TEST_CASE("solve on the trivial line") {
  const fs::path d = scratch("trivial");
  const fs::path cfg = write_file(d, "c.cfg", kTrivial);
  const Run r = run({"solve", "--config", cfg.string(), "--out", (d / "out").string(), "--quiet"});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  const auto j = read_json(d / "out" / "solve.json");
  CHECK(j["status"] == "converged");
  CHECK(j["K_defect"]["pass"] == true);
  CHECK(j["K_defect"]["tolerance"] == 1e-6);
  const std::string csv = read_file(d / "out" / "convergence.csv");
  CHECK(csv.rfind("step,eps,residual,m,det_defect\n", 0) == 0);
  CHECK(fs::exists(d / "out" / "metric.field"));

  SUBCASE("deterministic") {
    const Run r2 = run({"solve", "--config", cfg.string(), "--out", (d / "out2").string(), "--quiet"});
    CHECK(r2.code == 0);
    CHECK(read_file(d / "out" / "solve.json") == read_file(d / "out2" / "solve.json"));
    CHECK(csv == read_file(d / "out2" / "convergence.csv"));
    CHECK(read_file(d / "out" / "metric.field") == read_file(d / "out2" / "metric.field"));
  }
  SUBCASE("grid and seed overrides") {
    const Run r2 = run({"solve", "--config", cfg.string(), "--out", (d / "out3").string(), "--quiet", "--grid",
                        "16", "--seed", "9"});
    CHECK(r2.code == 0);
    CHECK(read_json(d / "out3" / "solve.json")["torus"]["N"] == 16);
  }
}

TEST_CASE("solve on the unipotent bundle chains into the destabilizer") {
  const fs::path d = scratch("unipotent");
  const fs::path cfg = write_file(d, "c.cfg", kUnipotent);
  const Run r = run({"solve", "--config", cfg.string(), "--out", (d / "out").string()});
  CHECK(r.code == 0);
  const auto j = read_json(d / "out" / "solve.json");
  CHECK(j["status"] == "blowup");
  const auto& ds = j["destabilizer"];
  CHECK(ds["rank"] == 1);
  CHECK(std::abs(ds["basis"]["re"][0][0].get<double>()) == doctest::Approx(1.0));
  CHECK(std::abs(ds["basis"]["re"][1][0].get<double>()) <= 1e-12);
  CHECK(ds["slope_inequality"]["pass"] == true);
  CHECK(ds["defects"]["flat"]["pass"] == true);

  // The dumped state reproduces the report.
  const Run r2 = run({"destabilize", "--config", cfg.string(), "--state", (d / "out" / "state").string(), "--out",
                      (d / "again").string(), "--quiet"});
  CHECK(r2.code == 0);
  const auto j2 = read_json(d / "again" / "destabilizer.json");
  CHECK(j2["rank"] == 1);
  CHECK(j2["chern_weil_defect"] == ds["chern_weil_defect"]);
}

TEST_CASE("stability on the rotation bundle") {
  const fs::path d = scratch("rotation");
  const fs::path cfg = write_file(d, "c.cfg", kRotation);
  const Run r = run({"stability", "--config", cfg.string(), "--out", (d / "out").string(), "--quiet"});
  CHECK(r.code == 0);
  const auto j = read_json(d / "out" / "stability.json");
  CHECK(j["field"] == "real");
  CHECK(j["R_stable"] == true);
  CHECK(j["verdict"] == "irreducible-stable");
  CHECK(j["splitting"]["Vbar_conjugate_defect"]["value"] == 0.0);
}

TEST_CASE("exit codes") {
  const fs::path d = scratch("codes");
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"solve"}).code == 1);
  CHECK(run({"solve", "--config", (d / "missing.cfg").string()}).code == 1);
  const fs::path bad = write_file(d, "bad.cfg", "[bundle]\nrank = 2\nmonodromy0 = 1 0; 0 0\n");
  const Run rb = run({"solve", "--config", bad.string(), "--out", (d / "o").string()});
  CHECK(rb.code == 1);
  CHECK(rb.err.find("Singular") != std::string::npos);
  const fs::path capped = write_file(d, "capped.cfg", std::string(kUnipotent) + "[solver]\nmax_steps = 2\n");
  CHECK(run({"solve", "--config", capped.string(), "--out", (d / "o2").string(), "--quiet"}).code == 2);
  const fs::path triv = write_file(d, "t.cfg", kTrivial);
  CHECK(run({"destabilize", "--config", triv.string(), "--state", d.string()}).code == 1);
  CHECK(run({"selftest", "--quiet"}).code == 0);
}
