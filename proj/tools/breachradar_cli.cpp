// breachradar: generate -> inject -> ingest -> detect/baseline -> eval, plus
// the scaling benchmark.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence under
// --strict.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "breachradar/breachradar.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace breachradar;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNotConverged = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::uint64_t h = fnv1a("");
  std::uintmax_t bytes = 0;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    bytes += static_cast<std::uintmax_t>(in.gcount());
  }
  return {{"path", path}, {"bytes", bytes}, {"fnv1a64", hex64(h)}};
}

// Files written by one command. Unless commit() is reached, everything created
// so far is deleted again, including the directory when we created it.
class OutputSet {
 public:
  explicit OutputSet(std::string dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw UsageError("--out-dir is required");
    std::error_code ec;
    created_dir_ = fs::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create output directory " + dir_ + ": " + ec.message());
  }
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

  std::string path(const std::string& name) {
    const auto p = (fs::path(dir_) / name).string();
    files_.push_back(p);
    return p;
  }

  std::ofstream open(const std::string& name, bool binary = false) {
    const auto p = path(name);
    std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
    if (!out) throw DataError("cannot create " + p);
    return out;
  }

  void write_json(const std::string& name, const json& j) {
    auto out = open(name);
    out << j.dump(2) << '\n';
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(fs::path(f).filename().string());
    return out;
  }

  void commit() { committed_ = true; }

 private:
  std::string dir_;
  std::vector<std::string> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

struct Invocation {
  std::vector<std::string> argv;  // after config merge
  CLI::App* sub = nullptr;
};

void write_manifest(OutputSet& out, const Invocation& inv, const std::vector<std::string>& inputs,
                    json extra = json::object()) {
  json m;
  m["tool"] = "breachradar";
  m["version"] = std::string(kVersion);
  m["subcommand"] = inv.sub->get_name();
  m["argv"] = inv.argv;
  m["resolved_options"] = inv.sub->config_to_str(true, false);
  json in = json::array();
  for (const auto& p : inputs) in.push_back(file_digest(p));
  m["inputs"] = in;
  auto outputs = out.names();
  outputs.push_back("manifest.json");
  m["outputs"] = outputs;
  for (auto& [k, v] : extra.items()) m[k] = v;
  out.write_json("manifest.json", m);
}

std::string fmt_param(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Subcommand options

struct GenerateArgs {
  std::string out_dir;
  GeneratorConfig cfg;
};

struct InjectArgs {
  std::string in, out_dir;
  InjectionConfig cfg;
  std::size_t max_poc_cards = 0;  // 0 = unbounded
};

struct IngestArgs {
  std::string in, out_dir, on_error = "abort";
  CsvSchema schema;
  std::size_t min_fraud_cards = 5;
};

struct DetectArgs {
  std::string graph, out_dir;
  PriorParams prior;
  std::size_t workers = 1;
  bool blames = false;
  double min_blame = 0.0;
  bool strict = false;
};

struct BaselineArgs {
  std::string graph, out_dir, method, homophily = "0.05";
  double alpha = 0.2, beta = 15.0;
};

struct EvalArgs {
  std::string graph, truth, out_dir, homophily = "auto", transactions;
  std::vector<std::string> methods, rankings;
  PriorParams prior;
  std::size_t workers = 1;
  std::int64_t week_tolerance = 0;
  SavingsPolicy savings;
  std::int64_t first_week = 0, last_week = -1;
  std::size_t min_fraud_cards = 5;
};

struct BenchArgs {
  std::string out_dir;
  std::vector<std::size_t> edges{100000, 300000, 1000000, 3000000};
  std::vector<std::size_t> workers{1, 2, 4};
  std::size_t iterations = 10;
  std::uint64_t seed = 1;
};

void add_prior_options(CLI::App* sub, PriorParams& p) {
  sub->add_option("--alpha", p.alpha, "Beta prior: virtual fraud-cards per location")->capture_default_str();
  sub->add_option("--beta", p.beta, "Beta prior: virtual non-fraud cards per location")->capture_default_str();
  sub->add_option("--epsilon", p.epsilon, "l1 convergence threshold")->capture_default_str();
  sub->add_option("--max-iter", p.max_iterations, "Iteration cap")->capture_default_str();
}

const std::vector<std::string> kMethods = {"breachradar", "ratio", "ratio-prior", "vertex-cover", "fabp"};

double resolve_homophily(const std::string& value, const BipartiteGraph& g) {
  if (value == "auto") return safe_coupling(g);
  try {
    std::size_t used = 0;
    const double c = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return c;
  } catch (const std::exception&) {
    throw UsageError("--homophily expects a number or 'auto', got '" + value + "'");
  }
}

struct MethodRun {
  RankedLocations ranking;
  std::vector<double> blame_sums;
  std::optional<DetectionResult> detection;
};

MethodRun run_method(const std::string& method, const BipartiteGraph& g, const PriorParams& prior,
                     std::size_t workers, const std::string& homophily) {
  MethodRun r;
  if (method == "breachradar") {
    auto res = workers > 1 ? run_engine(g, prior, workers) : run_detector(g, prior);
    r.ranking = rank_theta(res.theta);
    r.blame_sums = res.blame_sums;
    r.detection = std::move(res);
  } else if (method == "ratio") {
    r.ranking = ratio_score(g);
  } else if (method == "ratio-prior") {
    r.ranking = ratio_prior_score(g, prior);
  } else if (method == "vertex-cover") {
    r.ranking = greedy_vertex_cover(g);
  } else if (method == "fabp") {
    r.ranking = linearized_bp_score(g, resolve_homophily(homophily, g));
  } else {
    throw UsageError("unknown method '" + method + "'");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_generate(const GenerateArgs& a, const Invocation& inv) {
  OutputSet out(a.out_dir);
  const auto corpus = generate_corpus(a.cfg);
  {
    auto f = out.open("corpus.csv");
    write_transactions_csv(f, corpus);
  }
  write_manifest(out, inv, {}, {{"seeds", {{"generator", a.cfg.seed}}}, {"transactions", corpus.size()}});
  out.commit();
  std::cout << "generated " << corpus.size() << " transactions\n";
  return 0;
}

int cmd_inject(InjectArgs a, const Invocation& inv) {
  if (a.max_poc_cards > 0) a.cfg.max_poc_cards = a.max_poc_cards;
  auto corpus = read_transactions_csv(a.in);
  OutputSet out(a.out_dir);
  auto res = inject_pocs(std::move(corpus), a.cfg);
  {
    auto f = out.open("transactions.csv");
    write_transactions_csv(f, res.records);
  }
  out.write_json("truth.json", to_json(res.truth));
  write_manifest(out, inv, {a.in},
                 {{"seeds", {{"injection", a.cfg.seed}}},
                  {"victims", res.truth.num_victims()},
                  {"noise_cards", res.truth.num_noise()}});
  out.commit();
  std::cout << "injected " << res.truth.injected_pocs.size() << " POCs, " << res.truth.num_victims()
            << " victims, " << res.truth.num_noise() << " noise fraud-cards\n";
  return 0;
}

int cmd_ingest(const IngestArgs& a, const Invocation& inv) {
  std::ifstream in(a.in);
  if (!in) throw DataError("cannot open " + a.in);
  const auto policy = a.on_error == "skip" ? ErrorPolicy::kSkip : ErrorPolicy::kAbort;
  CsvTransactionReader reader(in, a.schema, policy);
  GraphBuilder builder;
  while (auto r = reader.next()) builder.add(*r);
  const auto g = builder.build(a.min_fraud_cards);
  OutputSet out(a.out_dir);
  save_snapshot(out.path("graph.brg"), g);
  auto stats = graph_stats(g);
  stats["records"] = builder.num_records();
  stats["skipped_rows"] = reader.skipped();
  json errs = json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(reader.errors().size(), 20); ++k)
    errs.push_back({{"line", reader.errors()[k].line}, {"message", reader.errors()[k].message}});
  stats["row_errors"] = errs;
  out.write_json("stats.json", stats);
  write_manifest(out, inv, {a.in});
  out.commit();
  std::cout << stats.dump() << '\n';
  return 0;
}

int cmd_detect(const DetectArgs& a, const Invocation& inv) {
  const auto g = load_snapshot(a.graph);
  OutputSet out(a.out_dir);
  Engine engine(g, a.workers);
  const auto res = engine.run(a.prior);
  {
    auto f = out.open("locations.csv");
    write_locations_csv(f, g, rank_theta(res.theta), &res.blame_sums);
  }
  {
    auto f = out.open("convergence.csv");
    convergence_report(f, res.trace);
  }
  if (a.blames) {
    auto f = out.open("blames.csv");
    write_blames_csv(f, g, res.blames, a.min_blame);
  }
  {
    auto f = out.open("timing.csv");
    write_timing_csv(f, engine.timings());
  }
  write_manifest(out, inv, {a.graph},
                 {{"iterations", res.iterations()}, {"converged", res.converged}, {"workers", a.workers}});
  out.commit();
  if (!res.converged) {
    std::cerr << "warning: no convergence within " << a.prior.max_iterations << " iterations (last l1 residual "
              << res.trace.l1_residuals.back() << ")\n";
    if (a.strict) return kExitNotConverged;
  }
  std::cout << "converged=" << res.converged << " iterations=" << res.iterations() << '\n';
  return 0;
}

int cmd_baseline(const BaselineArgs& a, const Invocation& inv) {
  const auto g = load_snapshot(a.graph);
  PriorParams prior;
  prior.alpha = a.alpha;
  prior.beta = a.beta;
  const auto run = run_method(a.method, g, prior, 1, a.homophily);
  OutputSet out(a.out_dir);
  {
    auto f = out.open("locations_" + a.method + ".csv");
    write_locations_csv(f, g, run.ranking, run.detection ? &run.blame_sums : nullptr);
  }
  write_manifest(out, inv, {a.graph});
  out.commit();
  return 0;
}

int cmd_eval(EvalArgs a, const Invocation& inv) {
  const auto g = load_snapshot(a.graph);
  std::ifstream tin(a.truth);
  if (!tin) throw DataError("cannot open " + a.truth);
  json tj;
  try {
    tin >> tj;
  } catch (const json::exception& e) {
    throw DataError("malformed ground truth JSON: " + std::string(e.what()));
  }
  const auto truth = ground_truth_from_json(tj);
  const auto labels = label_candidates(g, truth, a.week_tolerance);

  std::map<std::string, std::string> external;
  for (const auto& spec : a.rankings) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--ranking expects method=path, got '" + spec + "'");
    external[spec.substr(0, eq)] = spec.substr(eq + 1);
  }
  if (a.methods.empty() && external.empty()) a.methods = kMethods;

  const std::string suffix = "_p" + fmt_param(truth.steal_probability) + "_n" + fmt_param(truth.noise_multiplier) +
                             "_s" + std::to_string(truth.seed);
  OutputSet out(a.out_dir);
  std::vector<std::string> inputs{a.graph, a.truth};
  json summary;
  summary["steal_probability"] = truth.steal_probability;
  summary["noise_multiplier"] = truth.noise_multiplier;
  summary["seed"] = truth.seed;
  summary["injected_pocs"] = truth.injected_pocs.size();
  std::size_t candidates_positive = 0;
  for (auto l : labels) candidates_positive += l;
  summary["injected_candidates"] = candidates_positive;
  summary["injected_filtered_out"] = truth.injected_pocs.size() - std::min(truth.injected_pocs.size(), candidates_positive);
  json methods = json::object();

  auto emit = [&](const std::string& name, const RankedLocations& ranking) {
    const auto rep = score_ranking(ranking, labels);
    auto f = out.open("curve_" + name + suffix + ".csv");
    write_curve_csv(f, rep);
    methods[name] = {{"auc", rep.auc},
                     {"average_precision", rep.average_precision},
                     {"precision90_recall90", rep.has_operating_point(0.9, 0.9)}};
  };
  for (const auto& m : a.methods) {
    const auto run = run_method(m, g, a.prior, a.workers, a.homophily);
    emit(m, run.ranking);
    if (run.detection) {
      auto f = out.open("convergence_" + m + suffix + ".csv");
      convergence_report(f, run.detection->trace);
      methods[m]["iterations"] = run.detection->iterations();
      methods[m]["converged"] = run.detection->converged;
    }
  }
  for (const auto& [name, path] : external) {
    std::ifstream rin(path);
    if (!rin) throw DataError("cannot open " + path);
    emit(name, read_locations_csv(rin, g));
    inputs.push_back(path);
  }
  summary["methods"] = methods;

  if (!a.transactions.empty()) {
    const auto records = read_transactions_csv(a.transactions);
    inputs.push_back(a.transactions);
    std::int64_t lo = INT64_MAX, hi = INT64_MIN;
    for (const auto& r : records) {
      lo = std::min(lo, week_index_of(r.timestamp));
      hi = std::max(hi, week_index_of(r.timestamp));
    }
    const std::int64_t first = a.first_week > 0 ? a.first_week : lo + 1;
    const std::int64_t last = a.last_week >= 0 ? a.last_week : hi;
    const auto snaps = weekly_theta_snapshots(records, first, last, a.prior, a.min_fraud_cards);
    const auto rep = savings_simulation(snaps, records, a.savings);
    auto f = out.open("savings" + suffix + ".csv");
    write_savings_csv(f, rep);
    std::size_t victims = 0;
    for (const auto& w : rep.weeks) victims += w.reissued_victims;
    summary["savings"] = {{"total_net", rep.total_net()},
                          {"cards_reissued", rep.total_reissued()},
                          {"reissued_victim_share",
                           rep.total_reissued() ? static_cast<double>(victims) / static_cast<double>(rep.total_reissued())
                                                : 0.0}};
  }
  out.write_json("summary" + suffix + ".json", summary);
  write_manifest(out, inv, inputs);
  out.commit();
  std::cout << summary["methods"].dump() << '\n';
  return 0;
}

int cmd_bench(const BenchArgs& a, const Invocation& inv) {
  if (a.iterations < 1) throw UsageError("--iterations must be >= 1");
  OutputSet out(a.out_dir);
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> fit_points;
  std::ostringstream summary;
  summary << "edges,worker_count,millis_per_iteration\n";
  for (std::size_t edges : a.edges) {
    BenchGraphConfig bc;
    bc.num_edges = edges;
    bc.seed = a.seed;
    const auto g = generate_bench_graph(bc);
    for (std::size_t w : a.workers) {
      Engine engine(g, w);
      PriorParams p;
      p.epsilon = std::numeric_limits<double>::min();
      p.max_iterations = a.iterations;
      engine.run(p);
      {
        auto f = out.open("timing_e" + std::to_string(edges) + "_w" + std::to_string(w) + ".csv");
        write_timing_csv(f, engine.timings());
      }
      std::map<std::size_t, double> per_iter;
      for (const auto& t : engine.timings())
        if (t.iteration > 0) per_iter[t.iteration] += t.millis;
      std::vector<double> ms;
      for (const auto& [it, v] : per_iter) ms.push_back(v);
      std::sort(ms.begin(), ms.end());
      const double median = ms[ms.size() / 2];
      summary << g.num_edges() << ',' << w << ',' << median << '\n';
      fit_points[w].first.push_back(std::log(static_cast<double>(g.num_edges())));
      fit_points[w].second.push_back(std::log(median));
      std::cout << "edges=" << g.num_edges() << " workers=" << w << " ms/iter=" << median << '\n';
    }
  }
  {
    auto f = out.open("bench_summary.csv");
    f << summary.str();
  }
  json fits = json::object();
  for (const auto& [w, pts] : fit_points) {
    const auto fit = least_squares(pts.first, pts.second);
    fits[std::to_string(w)] = {{"loglog_slope", fit.slope}, {"r_squared", fit.r_squared}};
  }
  out.write_json("bench_fit.json", fits);
  write_manifest(out, inv, {}, {{"seeds", {{"bench_graph", a.seed}}}});
  out.commit();
  std::cout << fits.dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Config files: plain key=value lines (# comments) naming options of the
// chosen subcommand without the leading dashes. Flags on the command line win.

std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string config;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config") {
      if (k + 1 >= args.size()) throw UsageError("--config needs a file");
      config = args[k + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(k), args.begin() + static_cast<std::ptrdiff_t>(k + 2));
      break;
    }
    if (args[k].rfind("--config=", 0) == 0) {
      config = args[k].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(k));
      break;
    }
  }
  if (config.empty()) return args;
  std::ifstream in(config);
  if (!in) throw UsageError("cannot open config file " + config);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(config + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string flag = "--" + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;
    if (value == "true") {
      args.push_back(flag);
    } else if (value != "false") {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Points-of-Compromise detection on card-transaction graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.add_option("--config", "key=value file with defaults for the subcommand's options");

  GenerateArgs gen;
  auto* sg = app.add_subcommand("generate", "Write a synthetic clean transaction corpus");
  sg->add_option("--out-dir", gen.out_dir)->required();
  sg->add_option("--seed", gen.cfg.seed)->required();
  sg->add_option("--cards", gen.cfg.num_cards)->capture_default_str();
  sg->add_option("--terminals", gen.cfg.num_terminals)->capture_default_str();
  sg->add_option("--weeks", gen.cfg.weeks)->capture_default_str();
  sg->add_option("--tx-per-card", gen.cfg.transactions_per_card)->capture_default_str();
  sg->add_option("--zipf", gen.cfg.zipf_exponent)->capture_default_str();
  sg->add_option("--amount-median", gen.cfg.amount_median)->capture_default_str();
  sg->add_option("--amount-sigma", gen.cfg.amount_sigma)->capture_default_str();
  sg->add_option("--start-week", gen.cfg.start_week)->capture_default_str();
  sg->add_option("--favorites", gen.cfg.favorite_terminals)->capture_default_str();
  sg->add_option("--favorite-share", gen.cfg.favorite_share)->capture_default_str();

  InjectArgs inj;
  auto* si = app.add_subcommand("inject", "Plant ground-truth POCs into a corpus");
  si->add_option("--in", inj.in)->required()->check(CLI::ExistingFile);
  si->add_option("--out-dir", inj.out_dir)->required();
  si->add_option("--seed", inj.cfg.seed)->required();
  si->add_option("--pocs", inj.cfg.num_pocs)->capture_default_str();
  si->add_option("--p", inj.cfg.steal_probability, "Per-transaction stealing probability")->capture_default_str();
  si->add_option("--noise", inj.cfg.noise_multiplier, "Extra random fraud-cards as a multiple of victims")
      ->capture_default_str();
  si->add_option("--min-poc-cards", inj.cfg.min_poc_cards)->capture_default_str();
  si->add_option("--max-poc-cards", inj.max_poc_cards, "0 for unbounded")->capture_default_str();

  IngestArgs ing;
  auto* sn = app.add_subcommand("ingest", "Build the preprocessed graph snapshot from a transaction CSV");
  sn->add_option("--in", ing.in)->required()->check(CLI::ExistingFile);
  sn->add_option("--out-dir", ing.out_dir)->required();
  sn->add_option("--min-fraud-cards", ing.min_fraud_cards)->capture_default_str()->check(CLI::PositiveNumber);
  sn->add_option("--col-card", ing.schema.card)->capture_default_str();
  sn->add_option("--col-terminal", ing.schema.terminal)->capture_default_str();
  sn->add_option("--col-timestamp", ing.schema.timestamp)->capture_default_str();
  sn->add_option("--col-amount", ing.schema.amount)->capture_default_str();
  sn->add_option("--col-fraud", ing.schema.fraud)->capture_default_str();
  sn->add_option("--on-error", ing.on_error)->capture_default_str()->check(CLI::IsMember({"abort", "skip"}));

  DetectArgs det;
  auto* sd = app.add_subcommand("detect", "Run the alternating POC detector");
  sd->add_option("--graph", det.graph)->required()->check(CLI::ExistingFile);
  sd->add_option("--out-dir", det.out_dir)->required();
  add_prior_options(sd, det.prior);
  sd->add_option("--workers", det.workers)->envname("BREACHRADAR_WORKERS")->capture_default_str()->check(
      CLI::PositiveNumber);
  sd->add_flag("--blames", det.blames, "Also write the per-edge blame CSV");
  sd->add_option("--min-blame", det.min_blame)->capture_default_str();
  sd->add_flag("--strict", det.strict, "Exit 3 when the iteration cap is hit");

  BaselineArgs base;
  auto* sb = app.add_subcommand("baseline", "Rank locations with a comparison method");
  sb->add_option("--graph", base.graph)->required()->check(CLI::ExistingFile);
  sb->add_option("--out-dir", base.out_dir)->required();
  sb->add_option("--method", base.method)->required()->check(
      CLI::IsMember({"ratio", "ratio-prior", "vertex-cover", "fabp"}));
  sb->add_option("--alpha", base.alpha)->capture_default_str();
  sb->add_option("--beta", base.beta)->capture_default_str();
  sb->add_option("--homophily", base.homophily, "Linearized BP coupling, or 'auto'")->capture_default_str();

  EvalArgs ev;
  auto* se = app.add_subcommand("eval", "Score rankings against injected ground truth");
  se->add_option("--graph", ev.graph)->required()->check(CLI::ExistingFile);
  se->add_option("--truth", ev.truth)->required()->check(CLI::ExistingFile);
  se->add_option("--out-dir", ev.out_dir)->required();
  se->add_option("--method", ev.methods, "Repeatable; default all methods")->check(CLI::IsMember(kMethods));
  se->add_option("--ranking", ev.rankings, "Repeatable name=locations.csv from detect/baseline");
  add_prior_options(se, ev.prior);
  se->add_option("--workers", ev.workers)->envname("BREACHRADAR_WORKERS")->capture_default_str()->check(
      CLI::PositiveNumber);
  se->add_option("--homophily", ev.homophily)->capture_default_str();
  se->add_option("--week-tolerance", ev.week_tolerance, "Count same-terminal buckets within k weeks as hits")
      ->capture_default_str();
  se->add_option("--transactions", ev.transactions, "Labeled transactions for the savings simulation");
  se->add_option("--savings-threshold", ev.savings.theta_threshold)->capture_default_str();
  se->add_option("--reissue-cost", ev.savings.reissue_cost, "Minor units per card")->capture_default_str();
  se->add_option("--first-week", ev.first_week, "First decision week (default: second week of data)");
  se->add_option("--last-week", ev.last_week, "Last decision week (default: last week of data)");
  se->add_option("--min-fraud-cards", ev.min_fraud_cards)->capture_default_str();

  BenchArgs bench;
  auto* sc = app.add_subcommand("bench", "Per-iteration timing over generated graphs");
  sc->add_option("--out-dir", bench.out_dir)->required();
  sc->add_option("--edges", bench.edges)->capture_default_str()->delimiter(',');
  sc->add_option("--workers", bench.workers)->capture_default_str()->delimiter(',');
  sc->add_option("--iterations", bench.iterations)->capture_default_str();
  sc->add_option("--seed", bench.seed)->capture_default_str();

  Invocation inv;
  try {
    std::vector<std::string> raw(argv + 1, argv + argc);
    inv.argv = merge_config(raw);
    std::vector<std::string> rev(inv.argv.rbegin(), inv.argv.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (sg->parsed()) return (inv.sub = sg, cmd_generate(gen, inv));
    if (si->parsed()) return (inv.sub = si, cmd_inject(inj, inv));
    if (sn->parsed()) return (inv.sub = sn, cmd_ingest(ing, inv));
    if (sd->parsed()) return (inv.sub = sd, cmd_detect(det, inv));
    if (sb->parsed()) return (inv.sub = sb, cmd_baseline(base, inv));
    if (se->parsed()) return (inv.sub = se, cmd_eval(ev, inv));
    if (sc->parsed()) return (inv.sub = sc, cmd_bench(bench, inv));
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
