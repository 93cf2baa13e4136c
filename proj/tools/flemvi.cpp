#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flemvi/config.hpp"
#include "flemvi/io.hpp"
#include "flemvi/simulator.hpp"
#include "flemvi/spectral.hpp"
#include "flemvi/verify.hpp"

#ifndef FLEMVI_GIT_DESCRIBE
#define FLEMVI_GIT_DESCRIBE "unknown"
#endif

namespace {

using namespace flemvi;

constexpr int exit_verify_failed = 1;
constexpr int exit_invalid_config = 2;
constexpr int exit_io_failure = 3;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config_path, "JSON run configuration");
  cmd->add_option("--seed", opt.seed, "master seed (overrides config and FLEMVI_SEED)");
  cmd->add_option("--jobs", opt.jobs, "worker threads, 0 = all cores");
  cmd->add_option("--out", opt.out, "output directory");
}

RunConfig resolve_config(const CommonOptions& opt) {
  std::string path = opt.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("FLEMVI_CONFIG")) path = env;
  }
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  apply_env_overrides(cfg);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.jobs) cfg.jobs = *opt.jobs;
  if (opt.out) cfg.out = *opt.out;
  validate(cfg);
  return cfg;
}

std::filesystem::path prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.out + "': " + ec.message());
  return cfg.out;
}

std::string stamp(const RunConfig& cfg) {
  return "# seed=" + std::to_string(cfg.seed) + " config_hash=" + config_hash(cfg) + "\n";
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << content;
  os.flush();
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

void write_manifest(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& files, nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json m;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config_hash"] = config_hash(cfg);
  m["git_describe"] = FLEMVI_GIT_DESCRIBE;
  m["config"] = to_json(cfg);
  m["files"] = files;
  if (!extra.empty()) m["summary"] = std::move(extra);
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

std::string observable_name(const CylinderFunction& f, std::size_t j) {
  const auto& terms = f.phi().terms();
  if (f.arity() == 1 && terms.size() == 1 && terms[0].coef == 1.0 && terms[0].powers == std::vector<int>{1}) {
    return "h" + std::to_string(f.modes()[0] + 1);
  }
  return "f" + std::to_string(j + 1);
}

template <std::size_t Dim>
int simulate(const RunConfig& cfg) {
  const auto model = build_model<Dim>(cfg);
  Rng rng = make_stream(cfg.seed, 0);
  auto start = sample_configuration(*model.law, cfg.n, rng);
  ParticleConfig<Dim> pc(model.basis->domain(), std::move(start.points), std::move(rng));
  const auto traj = run(pc, cfg.horizon, cfg.dt, model.kernel, *model.basis,
                        std::span<const CylinderFunction>(model.observables), cfg.output_stride);

  std::ostringstream t;
  t << stamp(cfg) << "time";
  for (std::size_t j = 0; j < model.observables.size(); ++j) t << ',' << observable_name(model.observables[j], j);
  t << ",jump_count\n";
  for (std::size_t r = 0; r < traj.times.size(); ++r) {
    t << format_double(traj.times[r]);
    for (double v : traj.values[r]) t << ',' << format_double(v);
    t << ',' << traj.jump_counts[r] << '\n';
  }

  std::ostringstream jl;
  jl << stamp(cfg) << "time,i";
  for (std::size_t a = 0; a < Dim; ++a) jl << ",y" << a + 1;
  for (std::size_t a = 0; a < Dim; ++a) jl << ",z" << a + 1;
  jl << ",distance\n";
  for (const auto& e : pc.jump_log) {
    jl << format_double(e.time) << ',' << e.particle;
    for (std::size_t a = 0; a < Dim; ++a) jl << ',' << format_double(e.jump_off[a]);
    for (std::size_t a = 0; a < Dim; ++a) jl << ',' << format_double(e.target[a]);
    jl << ',' << format_double(e.distance) << '\n';
  }

  const auto dir = prepare_out(cfg);
  write_file(dir / "trajectory.csv", t.str());
  write_file(dir / "jumps.csv", jl.str());
  write_manifest(dir, cfg, "simulate", {"trajectory.csv", "jumps.csv"},
                 {{"particles", cfg.n}, {"jumps", pc.jump_count}, {"rows", traj.times.size()}});
  std::cout << "wrote " << traj.times.size() << " trajectory rows and " << pc.jump_log.size() << " jumps to "
            << dir.string() << "\n";
  return 0;
}

void apply_bonferroni(std::vector<TestReport>& reports) {
  std::size_t m = 0;
  for (const auto& r : reports) {
    if (r.rule == "k_sigma" && (r.status == Status::Pass || r.status == Status::Fail)) ++m;
  }
  const double k = bonferroni_k(m);
  for (auto& r : reports) {
    if (r.rule != "k_sigma") continue;
    r.tolerance += (k - r.k) * r.std_error;
    r.k = k;
    if (r.status == Status::Pass || r.status == Status::Fail) {
      r.status = r.deviation() <= r.tolerance ? Status::Pass : Status::Fail;
    }
  }
}

template <std::size_t Dim>
std::vector<TestReport> run_suite(const std::string& suite, const RunConfig& cfg, const Model<Dim>& model) {
  const MonteCarloRun mc{cfg.seed, cfg.effective_jobs()};
  std::vector<TestReport> out;
  auto prefix = [&](std::vector<TestReport> reps, const std::string& tag) {
    for (auto& r : reps) {
      r.name = tag + "." + r.name;
      out.push_back(std::move(r));
    }
  };
  if (suite == "identities") {
    prefix(identity_suite<Dim>(model.basis, model.law.get()), "identities");
  } else if (suite == "prop45") {
    std::vector<CylinderFunction> fs{CylinderFunction::constant(1.0)};
    fs.insert(fs.end(), model.observables.begin(), model.observables.end());
    for (std::size_t j = 0; j < fs.size(); ++j) {
      const std::string tag = j == 0 ? "prop45.one" : "prop45." + observable_name(fs[j], j - 1);
      prefix({prop45a(*model.law, fs[j], cfg.n, cfg.replicas, cfg.dt, mc)}, tag);
      if (j == 0) continue;
      auto bc = prop45bc(*model.law, fs[j], cfg.n, cfg.replicas, cfg.dt, model.kernel, mc);
      prefix({bc.jump, bc.drift, bc.sum, bc.per_jump}, tag);
    }
    prefix(cutoff_diagnostic(*model.law, std::span<const std::size_t>(cfg.n_list), cfg.replicas, cfg.dt, mc),
           "prop45");
  } else if (suite == "convergence") {
    prefix(convergence_experiment(*model.law, cfg.t, std::span<const std::size_t>(cfg.n_list), cfg.replicas, cfg.dt,
                                  model.kernel, mc),
           "convergence");
  } else if (suite == "mosco") {
    const auto& g = model.observables.front();
    prefix(mosco_operational_check(*model.law, g, CylinderFunction::constant(1.0), MoscoSettings{cfg.t, cfg.beta, 10},
                                   std::span<const std::size_t>(cfg.n_list), cfg.replicas, cfg.dt, model.kernel, mc),
           "mosco");
  }
  apply_bonferroni(out);
  return out;
}

template <std::size_t Dim>
int verify(const RunConfig& cfg, const std::string& suite) {
  const auto model = build_model<Dim>(cfg);
  const std::vector<std::string> suites =
      suite == "all" ? std::vector<std::string>{"identities", "prop45", "convergence", "mosco"}
                     : std::vector<std::string>{suite};
  nlohmann::json report;
  report["seed"] = cfg.seed;
  report["config_hash"] = config_hash(cfg);
  report["suites"] = nlohmann::json::object();
  std::vector<TestReport> all;
  for (const auto& s : suites) {
    auto reps = run_suite<Dim>(s, cfg, model);
    report["suites"][s] = to_json(std::span<const TestReport>(reps));
    all.insert(all.end(), reps.begin(), reps.end());
  }
  const bool failed = any_failed(all);
  report["passed"] = !failed;
  write_table(std::cout, all);
  const auto dir = prepare_out(cfg);
  const std::string name = "report_" + suite + ".json";
  write_file(dir / name, report.dump(2) + "\n");
  write_manifest(dir, cfg, "verify " + suite, {name}, {{"passed", !failed}});
  std::cout << (failed ? "verification FAILED" : "verification passed") << "\n";
  return failed ? exit_verify_failed : 0;
}

template <std::size_t Dim>
int flow_command(const RunConfig& cfg) {
  const auto model = build_model<Dim>(cfg);
  const std::size_t K = model.basis->size();
  std::ostringstream os;
  os << stamp(cfg) << "component,t,z";
  for (std::size_t k = 0; k < K; ++k) os << ",c_" << k + 1;
  os << '\n';
  for (std::size_t m = 0; m < model.law->size(); ++m) {
    const auto& d = (*model.law)[m].density.density();
    for (double t : cfg.t_list) {
      const auto h = u_z_v(d, t);
      os << m << ',' << format_double(t) << ',' << format_double(h.z);
      for (std::size_t k = 0; k < K; ++k) os << ',' << format_double(h.v.coefficient(k));
      os << '\n';
    }
  }
  const auto dir = prepare_out(cfg);
  write_file(dir / "flow.csv", os.str());
  write_manifest(dir, cfg, "flow", {"flow.csv"});
  std::cout << "wrote " << model.law->size() * cfg.t_list.size() << " flow rows to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flemvi: Fleming-Viot particle simulation and limit-flow verification"};
  app.require_subcommand(1);
  CommonOptions sim_opt, ver_opt, flow_opt;
  auto* sim = app.add_subcommand("simulate", "simulate one particle system and write its trajectory");
  add_common(sim, sim_opt);
  auto* ver = app.add_subcommand("verify", "run a verification suite");
  add_common(ver, ver_opt);
  std::string suite;
  ver->add_option("suite", suite, "identities | prop45 | convergence | mosco | all")
      ->required()
      ->check(CLI::IsMember({"identities", "prop45", "convergence", "mosco", "all"}));
  auto* flw = app.add_subcommand("flow", "tabulate the limit flow of every law component");
  add_common(flw, flow_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return exit_invalid_config;
  }

  try {
    if (*sim) {
      const auto cfg = resolve_config(sim_opt);
      return cfg.dimension() == 1 ? simulate<1>(cfg) : simulate<2>(cfg);
    }
    if (*ver) {
      const auto cfg = resolve_config(ver_opt);
      return cfg.dimension() == 1 ? verify<1>(cfg, suite) : verify<2>(cfg, suite);
    }
    const auto cfg = resolve_config(flow_opt);
    return cfg.dimension() == 1 ? flow_command<1>(cfg) : flow_command<2>(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return exit_invalid_config;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return exit_io_failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_verify_failed;
  }
}
