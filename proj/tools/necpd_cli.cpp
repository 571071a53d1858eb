// Command-line front end. Every subcommand reads a PipelineConfig from an
// optional key = value file, applies --key overrides and writes its
// artifacts into the `output` directory.
//
// Exit codes: 0 success, 2 invalid input, 3 solver divergence.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "necpd/necpd.hpp"

namespace fs = std::filesystem;
using namespace necpd;
using io::load_tensor;
using io::save_matrix_csv;
using io::save_tensor;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitDivergence = 3;

struct Options {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

void add_config_options(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config_path, "key = value configuration file");
  for (const auto& key : config_keys()) {
    std::string names = "--" + key;
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    if (dashed != key) names += ",--" + dashed;
    cmd->add_option_function<std::string>(
        names, [&opt, key](const std::string& v) { opt.overrides[key] = v; }, "override config key " + key);
  }
}

PipelineConfig resolve(const Options& opt) {
  PipelineConfig c = opt.config_path.empty() ? PipelineConfig{} : load_config(opt.config_path);
  for (const auto& key : config_keys()) {
    const auto it = opt.overrides.find(key);
    if (it != opt.overrides.end()) set_config_value(c, key, it->second);
  }
  c.validate();
  return c;
}

fs::path out_dir(const PipelineConfig& c) {
  fs::path p(c.output);
  fs::create_directories(p);
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidInput("cannot write " + p.string());
  return os;
}

void write_factors(const fs::path& dir, const KruskalModel& m, const std::string& prefix) {
  for (std::size_t n = 0; n < m.order(); ++n) {
    save_matrix_csv((dir / (prefix + std::to_string(n) + ".csv")).string(), m.factor(n));
  }
}

void write_trace(const fs::path& p, const ConvergenceTrace& t) {
  auto os = open_out(p);
  write_trace_csv(os, t);
}

// Tensor from `input`, or synthesized from the synth-cp keys when unset.
DenseTensor input_tensor(const PipelineConfig& c) {
  if (!c.input.empty()) return load_tensor(c.input);
  return synth_cp(c.dims, c.rank, c.noise_std, c.seed).tensor;
}

// Events from the `input` manifest, or synthesized from the synth-shm keys.
std::vector<EventRecord> input_events(const PipelineConfig& c) {
  if (!c.input.empty()) return load_events(c.input);
  return synth_shm(ShmSpec::from(c));
}

Method parse_method(const std::string& m) {
  if (m == "sgd") return Method::sgd;
  if (m == "psgd") return Method::psgd;
  if (m == "necpd") return Method::necpd;
  throw InvalidInput("method '" + m + "' is not a stochastic method");
}

// ---------------------------------------------------------------------------

void cmd_synth_cp(const PipelineConfig& c) {
  const fs::path dir = out_dir(c);
  const SyntheticCp s = synth_cp(c.dims, c.rank, c.noise_std, c.seed);
  save_tensor((dir / "tensor.nten").string(), s.tensor);
  write_factors(dir, s.truth, "truth_factor");
  std::cout << "wrote " << dims_to_string(s.tensor.dims()) << " tensor to " << (dir / "tensor.nten").string()
            << '\n';
}

void cmd_synth_shm(const PipelineConfig& c) {
  const fs::path dir = out_dir(c);
  const auto events = synth_shm(ShmSpec::from(c));
  save_events(dir.string(), events);
  std::cout << "wrote " << events.size() << " events to " << (dir / "manifest.csv").string() << '\n';
}

void cmd_decompose(const PipelineConfig& c) {
  const fs::path dir = out_dir(c);
  const DenseTensor x = input_tensor(c);
  const SolverConfig sc = c.solver();
  const FitResult fit = c.method == "als" ? als_fit_best(x, sc, c.restarts)
                                          : stochastic_fit(x, sc, parse_method(c.method));
  write_factors(dir, fit.model(), "factor");
  write_trace(dir / "trace.csv", fit.trace);
  auto os = open_out(dir / "summary.txt");
  os << "method " << c.method << "\nrank " << c.rank << "\nsteps " << fit.trace.back().t << "\nrmse "
     << io::format_double(fit.trace.back().rmse) << "\nfit " << io::format_double(fit.trace.back().fit) << '\n';
  std::cout << c.method << ": rmse " << io::format_double(fit.trace.back().rmse) << " fit "
            << io::format_double(fit.trace.back().fit) << '\n';
}

void cmd_compare(const PipelineConfig& c) {
  const fs::path dir = out_dir(c);
  const DenseTensor x = input_tensor(c);
  SolverConfig sgd = c.solver();
  sgd.gamma = 0.0;
  sgd.beta = 0.0;
  sgd.noise_sigma = 0.0;
  SolverConfig psgd = sgd;
  psgd.noise_sigma = c.noise_sigma;
  const SolverConfig necpd = c.solver();
  std::vector<std::pair<std::string, ConvergenceTrace>> traces{
      {"sgd", stochastic_fit(x, sgd, Method::sgd).trace},
      {"psgd", stochastic_fit(x, psgd, Method::psgd).trace},
      {"necpd", stochastic_fit(x, necpd, Method::necpd).trace}};
  for (const auto& [label, t] : traces) write_trace(dir / ("trace_" + label + ".csv"), t);
  const TraceReport rep = compare_traces(traces, c.target_rmse);
  {
    auto os = open_out(dir / "compare.csv");
    write_report_csv(os, rep);
  }
  auto os = open_out(dir / "summary.txt");
  write_report_summary(os, rep);
  write_report_summary(std::cout, rep);
}

void cmd_rank_scan(const PipelineConfig& c) {
  const fs::path dir = out_dir(c);
  const DenseTensor x = input_tensor(c);
  const auto scan = rank_scan(x, c.rmax, c.solver(), c.restarts);
  auto os = open_out(dir / "rank_scan.csv");
  os << "rank,fit,corcondia,rank_deficient\n";
  for (const auto& r : scan) {
    os << r.rank << ',' << io::format_double(r.fit) << ',' << io::format_double(r.corcondia) << ','
       << (r.rank_deficient ? 1 : 0) << '\n';
  }
  const std::size_t chosen = select_rank(scan);
  auto sel = open_out(dir / "selected_rank.txt");
  sel << chosen << '\n';
  std::cout << "selected rank " << chosen << '\n';
}

struct StreamRun {
  std::vector<EventRecord> events;
  std::vector<std::size_t> streamed;  // indices into events
  StreamResult result;
};

// Trains on the first round(bootstrap_fraction * healthy) healthy events in
// input order and streams every other event in input order.
StreamRun run_events(const PipelineConfig& c) {
  StreamRun run;
  run.events = input_events(c);
  const FeatureOptions fo{c.n_freq, c.diff_adjacent};
  std::size_t n_healthy = 0;
  for (const auto& e : run.events) n_healthy += e.healthy();
  const auto n_train = static_cast<std::size_t>(std::llround(c.bootstrap_fraction * static_cast<double>(n_healthy)));
  std::vector<Matrix> train, stream;
  for (std::size_t i = 0; i < run.events.size(); ++i) {
    Matrix f = extract_features(run.events[i], fo).values;
    if (run.events[i].healthy() && train.size() < n_train) {
      train.push_back(std::move(f));
    } else {
      stream.push_back(std::move(f));
      run.streamed.push_back(i);
    }
  }
  run.result = run_stream(c, train, stream);
  return run;
}

void write_decisions(const fs::path& p, const StreamRun& run) {
  auto os = open_out(p);
  os << "event,decision_value,label\n";
  for (std::size_t i = 0; i < run.streamed.size(); ++i) {
    const auto& e = run.events[run.streamed[i]];
    os << e.id << ',' << io::format_double(run.result.decision_values(static_cast<Eigen::Index>(i))) << ','
       << e.label << '\n';
  }
}

void write_localization(const fs::path& p, const StreamRun& run) {
  auto os = open_out(p);
  const Matrix& s = run.result.localization;
  os << "event";
  for (Eigen::Index l = 0; l < s.cols(); ++l) os << ",loc" << l;
  os << '\n';
  for (std::size_t i = 0; i < run.streamed.size(); ++i) {
    os << run.events[run.streamed[i]].id;
    for (Eigen::Index l = 0; l < s.cols(); ++l) os << ',' << io::format_double(s(static_cast<Eigen::Index>(i), l));
    os << '\n';
  }
}

// Location with the highest mean score over streamed damage events.
std::optional<Eigen::Index> damaged_location(const StreamRun& run) {
  const Matrix& s = run.result.localization;
  Vector sum = Vector::Zero(s.cols());
  std::size_t n = 0;
  for (std::size_t i = 0; i < run.streamed.size(); ++i) {
    if (run.events[run.streamed[i]].healthy()) continue;
    sum += s.row(static_cast<Eigen::Index>(i)).transpose();
    ++n;
  }
  if (n == 0 || s.cols() == 0) return std::nullopt;
  Eigen::Index arg = 0;
  sum.maxCoeff(&arg);
  return arg;
}

void cmd_stream(const PipelineConfig& c, bool decisions, bool localization) {
  const fs::path dir = out_dir(c);
  const StreamRun run = run_events(c);
  if (decisions) write_decisions(dir / "decisions.csv", run);
  if (localization) write_localization(dir / "localization.csv", run);
  if (decisions && localization) {
    write_trace(dir / "trace.csv", run.result.trace);
    write_factors(dir, run.result.state.model, "factor");
  }
  const auto flagged = (run.result.decision_values.array() < 0.0).count();
  std::cout << "streamed " << run.streamed.size() << " events, flagged " << flagged << '\n';
  if (localization) {
    if (const auto loc = damaged_location(run)) std::cout << "most anomalous location " << *loc << '\n';
  }
}

void cmd_evaluate(const PipelineConfig& c) {
  const fs::path dir = out_dir(c);
  const BootstrapResult r = evaluate_bootstrap(c, input_events(c));
  {
    auto os = open_out(dir / "trials.csv");
    os << "trial,precision,recall,fscore,tp,fp,fn,tn\n";
    for (std::size_t t = 0; t < r.outcomes.size(); ++t) {
      const auto& o = r.outcomes[t];
      os << t << ',' << io::format_double(o.score.precision) << ',' << io::format_double(o.score.recall) << ','
         << io::format_double(o.score.fscore) << ',' << o.tp << ',' << o.fp << ',' << o.fn << ',' << o.tn << '\n';
    }
  }
  auto os = open_out(dir / "summary.txt");
  auto line = [&](std::ostream& s) {
    s << "fscore " << io::format_double(r.report.mean.fscore) << " +- " << io::format_double(r.report.stddev.fscore)
      << "\nprecision " << io::format_double(r.report.mean.precision) << " +- "
      << io::format_double(r.report.stddev.precision) << "\nrecall " << io::format_double(r.report.mean.recall)
      << " +- " << io::format_double(r.report.stddev.recall) << '\n';
  };
  line(os);
  line(std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming CP decomposition and structural health monitoring pipeline"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs{
      {"synth-cp", "write a synthetic Kruskal tensor and its factors"},
      {"synth-shm", "write synthetic structural events and a manifest"},
      {"decompose", "fit a CP model (als, sgd, psgd or necpd)"},
      {"stream", "train on healthy events, stream the rest, write all artifacts"},
      {"rank-scan", "CORCONDIA and fit for ranks 1..rmax"},
      {"detect", "per-event decision values of a streaming run"},
      {"localize", "per-event location scores of a streaming run"},
      {"evaluate", "bootstrap F-score evaluation"},
      {"compare", "SGD, PSGD and NeCPD convergence traces on one tensor"},
  };
  std::map<std::string, Options> opts;
  std::map<std::string, CLI::App*> cmds;
  for (const auto& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_config_options(cmd, opts[s.name]);
    cmds[s.name] = cmd;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    for (const auto& [name, cmd] : cmds) {
      if (!cmd->parsed()) continue;
      const PipelineConfig c = resolve(opts[name]);
      if (name == "synth-cp") cmd_synth_cp(c);
      else if (name == "synth-shm") cmd_synth_shm(c);
      else if (name == "decompose") cmd_decompose(c);
      else if (name == "stream") cmd_stream(c, true, true);
      else if (name == "detect") cmd_stream(c, true, false);
      else if (name == "localize") cmd_stream(c, false, true);
      else if (name == "rank-scan") cmd_rank_scan(c);
      else if (name == "evaluate") cmd_evaluate(c);
      else if (name == "compare") cmd_compare(c);
    }
  } catch (const Divergence& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return 0;
}
