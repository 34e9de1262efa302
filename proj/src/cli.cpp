#include "ahe/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ahe/config.hpp"
#include "ahe/continuation.hpp"
#include "ahe/destabilizer.hpp"
#include "ahe/error.hpp"
#include "ahe/field_io.hpp"
#include "ahe/gauduchon.hpp"
#include "ahe/linalg.hpp"
#include "ahe/stability.hpp"
#include "ahe/synthetic.hpp"

namespace ahe {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Flags {
  std::string config;
  std::string out;
  std::string state;
  std::int64_t seed = -1;
  int grid = 0;
  bool quiet = false;
};

ordered_json check(double value, double tolerance, bool pass) {
  return ordered_json{{"value", value}, {"tolerance", tolerance}, {"pass", pass}};
}
ordered_json at_most(double value, double tolerance) { return check(value, tolerance, value <= tolerance); }

ordered_json matrix_json(const Mat& m) {
  ordered_json re = ordered_json::array(), im = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json r = ordered_json::array(), c = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      r.push_back(m(i, j).real());
      c.push_back(m(i, j).imag());
    }
    re.push_back(r);
    im.push_back(c);
  }
  return ordered_json{{"re", re}, {"im", im}};
}

// Every "pass" field in the tree.
bool all_pass(const ordered_json& j) {
  if (j.is_object()) {
    if (j.contains("pass") && j["pass"].is_boolean() && !j["pass"].get<bool>()) return false;
    for (const auto& [k, v] : j.items())
      if (!all_pass(v)) return false;
  } else if (j.is_array()) {
    for (const auto& v : j)
      if (!all_pass(v)) return false;
  }
  return true;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct Context {
  RunConfig cfg;
  fs::path out;
  bool quiet = false;
};

Context make_context(const Flags& f) {
  if (f.config.empty()) throw Error(ErrorCode::ConfigError, "--config is required");
  Context c;
  c.cfg = load_config(f.config);
  if (f.grid > 0) c.cfg.resolution = f.grid;
  if (f.grid < 0 || (f.grid > 0 && f.grid < 4)) throw Error(ErrorCode::ConfigError, "--grid must be at least 4");
  if (f.seed >= 0) c.cfg.seed = static_cast<std::uint64_t>(f.seed);
  c.out = f.out.empty() ? fs::path(c.cfg.out_dir) : fs::path(f.out);
  fs::create_directories(c.out);
  c.quiet = f.quiet;
  return c;
}

double grid_tol(const AffineTorus& t) { return 10.0 / (double(t.resolution()) * t.resolution()); }

ordered_json torus_json(const AffineTorus& t) { return ordered_json{{"dim", t.dim()}, {"N", t.resolution()}}; }

struct GauduchonStep {
  GauduchonResult result;
  MetricField metric;
  ordered_json report;
};

GauduchonStep gauduchon_step(const AffineTorus& t, const MetricField& g) {
  const GauduchonResult gr = find_gauduchon_factor(t, g);
  double fmin = 1e300, fmax = -1e300;
  for (const cd& v : gr.factor) {
    fmin = std::min(fmin, v.real());
    fmax = std::max(fmax, v.real());
  }
  ordered_json j;
  j["trivially_gauduchon"] = gr.trivially_gauduchon;
  j["Q_residual"] = at_most(gr.residual, GauduchonOptions{}.residual_tolerance);
  j["factor_min"] = check(fmin, 0.0, fmin > 0.0);
  j["factor_max"] = fmax;
  j["kernel_dimension"] = check(gr.kernel_dimension, 1, gr.kernel_dimension == 1);
  j["metric_residual"] = gr.metric_residual;
  j["smallest_singular_values"] = gr.smallest_singular_values;
  return {gr, gr.metric, j};
}

ordered_json stability_json(const StabilityReport& s) {
  ordered_json j;
  j["field"] = s.field == FieldKind::Real ? "real" : "complex";
  j["degree"] = s.degree;
  j["slope"] = s.slope;
  j["tolerance"] = s.tolerance;
  j["verdict"] = to_string(s.verdict);
  const bool stable = s.verdict == Verdict::Stable || s.verdict == Verdict::IrreducibleStable;
  j[s.field == FieldKind::Real ? "R_stable" : "C_stable"] = stable;
  j["commutant_dimension"] = s.commutant_dimension;
  j["simplicity"] = to_string(s.simplicity);
  j["continuous_family"] = s.continuous_family;
  ordered_json w = ordered_json::array();
  for (const auto& x : s.witnesses) w.push_back({{"rank", x.subbundle.rank()}, {"slope", x.slope}, {"basis", matrix_json(x.subbundle.basis)}});
  j["witnesses"] = w;
  if (s.splitting) {
    const double exact = (s.splitting->Vbar - s.splitting->V.conjugate()).norm();
    j["splitting"] = {{"V", matrix_json(s.splitting->V)}, {"Vbar_conjugate_defect", at_most(exact, 0.0)}};
  } else {
    j["splitting"] = nullptr;
  }
  return j;
}

ordered_json destabilizer_json(const DestabilizerReport& r, const DestabilizerOptions& o, const AffineTorus& t) {
  ordered_json j;
  j["rank"] = r.subbundle.rank();
  j["basis"] = matrix_json(r.subbundle.basis);
  j["spectral_gap"] = check(r.gap, o.min_gap, r.gap >= o.min_gap);
  j["defects"] = {{"idempotent", at_most(r.defects.idempotent, o.defect_tol)},
                  {"adjoint", at_most(r.defects.adjoint, o.defect_tol)},
                  {"holomorphic", at_most(r.defects.holomorphic, o.defect_tol)},
                  {"flat", at_most(r.defects.flat, o.defect_tol)}};
  j["slope_F"] = r.slope_F;
  j["slope_E"] = r.slope_E;
  j["slope_inequality"] = check(r.slope_F - r.slope_E, -r.slope_tolerance, r.slope_F >= r.slope_E - r.slope_tolerance);
  j["slope_F_chern_weil"] = r.slope_F_chern_weil;
  j["chern_weil_defect"] = at_most(r.chern_weil_defect, grid_tol(t));
  return j;
}

void summary(const Context& c, std::ostream& out, const std::string& line) {
  if (!c.quiet) out << line << '\n';
}

int finish(const Context& c, std::ostream& out, std::ostream& err, const std::string& name, const ordered_json& j) {
  write_json(c.out / (name + ".json"), j);
  if (!all_pass(j)) {
    err << "ahe " << name << ": a reported check failed, see " << (c.out / (name + ".json")).string() << '\n';
    return 3;
  }
  summary(c, out, "wrote " + (c.out / (name + ".json")).string());
  return 0;
}

int cmd_gauduchon(const Flags& f, std::ostream& out, std::ostream& err) {
  const Context c = make_context(f);
  const AffineTorus t = make_torus(c.cfg);
  const MetricField g = make_metric(c.cfg, t);
  const GauduchonStep gs = gauduchon_step(t, g);
  const GauduchonResult& gr = gs.result;
  save_field((c.out / "gauduchon_factor.field").string(), t, gr.factor);
  save_field((c.out / "gauduchon_metric.field").string(), t, gr.metric);
  ordered_json j{{"command", "gauduchon"}, {"torus", torus_json(t)}};
  j.update(gs.report);
  summary(c, out, "gauduchon: Q residual " + std::to_string(gr.residual) + ", kernel dimension " +
                      std::to_string(gr.kernel_dimension));
  return finish(c, out, err, "gauduchon", j);
}

int cmd_stability(const Flags& f, std::ostream& out, std::ostream& err) {
  const Context c = make_context(f);
  const AffineTorus t = make_torus(c.cfg);
  const FlatBundle b = make_bundle(c.cfg);
  const GauduchonStep gs = gauduchon_step(t, make_metric(c.cfg, t));
  const StabilityReport s = stability_verdict(b, t, gs.metric);
  ordered_json j{{"command", "stability"}, {"torus", torus_json(t)}, {"rank", b.rank()}};
  j["gauduchon"] = gs.report;
  j.update(stability_json(s));
  summary(c, out, "stability: " + to_string(s.verdict) + ", " + to_string(s.simplicity) +
                      (s.splitting ? ", conjugate splitting V + Vbar" : ""));
  return finish(c, out, err, "stability", j);
}

void write_csv(const fs::path& path, const std::vector<HistoryEntry>& hist) {
  std::ofstream csv(path);
  if (!csv) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  csv << "step,eps,residual,m,det_defect\n";
  char buf[160];
  for (const auto& e : hist) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", e.step, e.epsilon, e.residual, e.m, e.det_defect);
    csv << buf;
  }
}

ordered_json run_destabilizer(const Context& c, const FlatBundle& b, const AffineTorus& t, const MetricField& gG,
                              const HermitianField& h0, const EndField& f, std::ostream& out) {
  const DestabilizerReport r = destabilize(b, t, gG, h0, f, c.cfg.destabilizer);
  save_field((c.out / "pi.field").string(), t, r.pi);
  summary(c, out, "destabilizer: flat subbundle of rank " + std::to_string(r.subbundle.rank()) + ", slope " +
                      std::to_string(r.slope_F) + " >= " + std::to_string(r.slope_E));
  return destabilizer_json(r, c.cfg.destabilizer, t);
}

int cmd_solve(const Flags& f, std::ostream& out, std::ostream& err) {
  const Context c = make_context(f);
  const AffineTorus t = make_torus(c.cfg);
  const FlatBundle b = make_bundle(c.cfg);
  const GauduchonStep gs = gauduchon_step(t, make_metric(c.cfg, t));
  const HEResult r = run_continuation(b, t, gs.metric, make_background(c.cfg, b, t), c.cfg.solver);

  write_csv(c.out / "convergence.csv", r.state.history);
  save_field((c.out / "metric.field").string(), t, r.final_metric);
  fs::create_directories(c.out / "state");
  save_field((c.out / "state" / "h0.field").string(), t, r.state.h0);
  save_field((c.out / "state" / "f.field").string(), t, r.state.f);

  double det_max = 0.0;
  for (const auto& e : r.state.history) det_max = std::max(det_max, e.det_defect);
  ordered_json j{{"command", "solve"}, {"torus", torus_json(t)}, {"rank", b.rank()}};
  j["gauduchon"] = gs.report;
  j["status"] = to_string(r.status);
  j["gamma"] = r.gamma;
  j["trace_defect"] = at_most(r.trace_defect, grid_tol(t));
  j["det_defect"] = at_most(det_max, 1e-6);
  j["epsilon"] = r.state.epsilon;
  j["m"] = r.state.m;
  j["m_slope"] = r.m_slope;
  j["max_eps_m"] = r.max_eps_m;
  j["steps"] = r.state.history.size();
  if (r.status == HEStatus::Converged) {
    j["K_defect"] = at_most(r.K_defect, 1e-6);
  } else {
    j["K_defect"] = r.K_defect;
  }
  summary(c, out, "solve: " + to_string(r.status) + " after " + std::to_string(r.state.history.size()) +
                      " steps, eps " + std::to_string(r.state.epsilon) + ", m " + std::to_string(r.state.m));
  if (r.status == HEStatus::Blowup) {
    j["m_max"] = check(r.state.m, c.cfg.solver.m_max, r.state.m >= c.cfg.solver.m_max);
    // Reaching m_max is a target, not an invariant: record it without failing the run.
    j["m_max"]["pass"] = nullptr;
    j["m_max"]["reached"] = r.state.m >= c.cfg.solver.m_max;
    const ordered_json d = run_destabilizer(c, b, t, gs.metric, r.state.h0, r.state.f, out);
    write_json(c.out / "destabilizer.json", d);
    j["destabilizer"] = d;
  }
  const int code = finish(c, out, err, "solve", j);
  if (code != 0) return code;
  if (r.status == HEStatus::MaxIters) {
    err << "ahe solve: continuation stopped without convergence or a confirmed blow-up\n";
    return 2;
  }
  return 0;
}

int cmd_destabilize(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.state.empty()) throw Error(ErrorCode::ConfigError, "--state DIR is required");
  const Context c = make_context(f);
  const AffineTorus t = make_torus(c.cfg);
  const FlatBundle b = make_bundle(c.cfg);
  const GauduchonStep gs = gauduchon_step(t, make_metric(c.cfg, t));
  const fs::path dir(f.state);
  const HermitianField h0 = to_hermitian(load_field((dir / "h0.field").string()), t);
  const EndField fe = to_end(load_field((dir / "f.field").string()), t);
  if (h0.size() && h0[0].rows() != b.rank()) throw Error(ErrorCode::ConfigError, "state rank differs from the bundle");
  ordered_json j{{"command", "destabilize"}, {"torus", torus_json(t)}, {"rank", b.rank()}};
  j.update(run_destabilizer(c, b, t, gs.metric, h0, fe, out));
  return finish(c, out, err, "destabilizer", j);
}

// Short invariant suite on small grids.
int cmd_selftest(const Flags& f, std::ostream& out, std::ostream& err) {
  const int N = f.grid > 0 ? f.grid : 16;
  Rng rng(f.seed >= 0 ? static_cast<std::uint64_t>(f.seed) : 1);
  ordered_json j{{"command", "selftest"}, {"N", N}};
  auto line = [&](const std::string& name, const ordered_json& c) {
    j[name] = c;
    if (!f.quiet) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s %-28s %.3e (tolerance %.1e)", c["pass"].get<bool>() ? "PASS" : "FAIL",
                    name.c_str(), c["value"].get<double>(), c["tolerance"].get<double>());
      out << buf << '\n';
    }
  };
  const double tol = 10.0 / (double(N) * N);
  Mat u(2, 2);
  u << 1, 1, 0, 1;

  {
    const AffineTorus t(2, N);
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const Form chi = random_periodic_form(t, rng, 1, 2, 1.0);
      worst = std::max(worst, std::abs(integrate(t, div_by_nu(dolbeault_del(t, chi)))));
      const Form psi = random_periodic_form(t, rng, 2, 1, 1.0);
      worst = std::max(worst, std::abs(integrate(t, div_by_nu(dolbeault_delbar(t, psi)))));
    }
    line("integration_by_parts", at_most(worst, tol));
  }
  {
    const AffineTorus t(2, N);
    const GauduchonResult gr = find_gauduchon_factor(t, sine_conformal_metric(t, 0.5));
    line("gauduchon_Q_residual", at_most(gr.residual, 1e-8));
    line("gauduchon_kernel_dimension", check(gr.kernel_dimension, 1, gr.kernel_dimension == 1));
  }
  {
    const AffineTorus t(1, N);
    const FlatBundle b = FlatBundle::build({u});
    const MetricField g = constant_metric(t, RealMat::Identity(1, 1));
    FlatSubbundle F{Mat::Zero(2, 1)};
    F.basis(0, 0) = 1.0;
    const AdditivityCheck a = degree_additivity_check(b, t, random_twisted_metric(b, t, rng, 0.3), g, F);
    line("degree_additivity", at_most(a.defect, tol));
    const HermitianField h0 = random_twisted_metric(b, t, rng, 0.3);
    const HEProblem p = make_problem(b, t, g, h0);
    const EndField fe = random_positive(b, t, h0, rng, 0.3);
    const EndField phi = random_selfadjoint(b, t, h0, rng, 0.3);
    const EndField an = linearize_apply(p, fe, phi, 0.5), fd = linearize_fd(p, fe, phi, 0.5);
    double diff = 0.0, mag = 0.0;
    for (std::size_t x = 0; x < t.size(); ++x) {
      diff = std::max(diff, (an[x] - fd[x]).norm());
      mag = std::max(mag, an[x].norm());
    }
    line("linearization_fd", at_most(diff / mag, 1e-5));
    const RescaledPower rp = rescaled_power(h0, fe, 0.5);
    double top = 0.0;
    for (std::size_t x = 0; x < t.size(); ++x) top = std::max(top, selfadjoint_eigenvalues(h0[x], rp.power[x]).maxCoeff());
    line("rescaled_power_max", at_most(std::abs(top - 1.0), 1e-12));
  }
  {
    const double a = std::sqrt(2.0) * 3.14159265358979323846;
    Mat rot(2, 2);
    rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    const FlatBundle rb = FlatBundle::build({rot}, FieldKind::Real);
    const auto sp = conjugate_splitting(rb);
    const double exact = sp ? (sp->Vbar - sp->V.conjugate()).norm() : 1.0;
    line("conjugate_splitting", at_most(exact, 0.0));
    const int cu = commutant_dimension(FlatBundle::build({u}));
    line("unipotent_commutant", check(cu, 2, cu == 2));
  }
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_json(fs::path(f.out) / "selftest.json", j);
  }
  if (!all_pass(j)) {
    err << "ahe selftest: invariant check failed\n";
    return 3;
  }
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Affine Hermitian-Einstein metrics on flat bundles over tori"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&](CLI::App* s, bool needs_config) {
    auto* c = s->add_option("--config", f.config, "run configuration");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    s->add_option("--out", f.out, "output directory");
    s->add_option("--seed", f.seed, "random seed")->check(CLI::NonNegativeNumber);
    s->add_option("--grid", f.grid, "grid resolution override")->check(CLI::PositiveNumber);
    s->add_flag("--quiet", f.quiet, "suppress the summary on stdout");
  };
  auto* g = app.add_subcommand("gauduchon", "Gauduchon factor of the configured metric");
  common(g, true);
  auto* st = app.add_subcommand("stability", "flat subbundles, slopes and the stability verdict");
  common(st, true);
  auto* so = app.add_subcommand("solve", "continuity method; on blow-up, the destabilizing subbundle");
  common(so, true);
  auto* de = app.add_subcommand("destabilize", "destabilizing subbundle from a dumped blow-up state");
  common(de, true);
  de->add_option("--state", f.state, "directory with h0.field and f.field")->required()->check(CLI::ExistingDirectory);
  auto* se = app.add_subcommand("selftest", "short invariant suite");
  common(se, false);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  try {
    if (g->parsed()) return cmd_gauduchon(f, out, err);
    if (st->parsed()) return cmd_stability(f, out, err);
    if (so->parsed()) return cmd_solve(f, out, err);
    if (de->parsed()) return cmd_destabilize(f, out, err);
    return cmd_selftest(f, out, err);
  } catch (const Error& e) {
    err << "ahe: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "ahe: IoError: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "ahe: internal error: " << e.what() << '\n';
    return 3;
  }
}

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args, out, err);
}

}  // namespace ahe
