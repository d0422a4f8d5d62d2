// datamarket: experiment presets, protocol demos and ledger inspection.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "datamarket/config_io.hpp"
#include "datamarket/consensus.hpp"
#include "datamarket/core.hpp"
#include "datamarket/csv.hpp"
#include "datamarket/errors.hpp"
#include "datamarket/market.hpp"
#include "datamarket/simharness.hpp"
#include "datamarket/valuation.hpp"
#include "datamarket/verification.hpp"
#include "datamarket/voting.hpp"

namespace fs = std::filesystem;
using namespace datamarket;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitThreshold = 3;

struct ShapleySettings {
  std::string data;          // CSV of data points
  std::string holdout;       // regression holdout CSV (defaults to data)
  std::string objective = "additive";
  int samples = 2000;
  int max_work = 10;
};

struct MarketSettings {
  std::string ledger = "ledger.tsv";  // relative to the output directory
  int coalitions = 3;
  double ask_price = 10.0;
};

struct CliConfig {
  fs::path base_dir;
  sim::ExperimentSpec experiment;
  ShapleySettings shapley;
  MarketSettings market;
};

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string expect_breakdown;
  std::string ledger;
};

// Every verb reads the whole schema, so one file can drive them all and a
// misspelled key is still fatal.
CliConfig load_cli_config(const Options& opts, const sim::ExperimentSpec& defaults) {
  CliConfig cfg;
  cfg.experiment = defaults;
  YAML::Node node;
  if (!opts.config.empty()) {
    node = load_config_file(opts.config);
    cfg.base_dir = fs::path(opts.config).parent_path();
  }
  ConfigSection root(node, "");
  cfg.experiment = sim::read_experiment(root, defaults);

  auto sh = root.section("shapley");
  cfg.shapley.data = sh.get_string("data", cfg.shapley.data);
  cfg.shapley.holdout = sh.get_string("holdout", cfg.shapley.holdout);
  cfg.shapley.objective = sh.get_string("objective", cfg.shapley.objective);
  cfg.shapley.samples = static_cast<int>(sh.get_int("samples", cfg.shapley.samples));
  cfg.shapley.max_work = static_cast<int>(sh.get_int("max_work", cfg.shapley.max_work));
  if (cfg.shapley.objective != "additive" && cfg.shapley.objective != "regression") {
    throw ConfigError("shapley.objective", sh.line_of("objective"),
                      "expected 'additive' or 'regression'");
  }
  if (cfg.shapley.samples < 1) throw ConfigError("shapley.samples", sh.line_of("samples"), "must be >= 1");
  if (cfg.shapley.max_work < 1) throw ConfigError("shapley.max_work", sh.line_of("max_work"), "must be >= 1");
  sh.finish();

  auto mk = root.section("market");
  cfg.market.ledger = mk.get_string("ledger", cfg.market.ledger);
  cfg.market.coalitions = static_cast<int>(mk.get_int("coalitions", cfg.market.coalitions));
  cfg.market.ask_price = mk.get_double("ask_price", cfg.market.ask_price);
  if (cfg.market.coalitions < 2) throw ConfigError("market.coalitions", mk.line_of("coalitions"), "must be >= 2");
  if (!(cfg.market.ask_price >= 0)) throw ConfigError("market.ask_price", mk.line_of("ask_price"), "must be >= 0");
  mk.finish();
  root.finish();

  if (opts.seed) cfg.experiment.base.seed = *opts.seed;
  cfg.experiment.jobs = opts.jobs;
  return cfg;
}

fs::path out_dir(const Options& opts) {
  fs::path dir = "out";
  if (const char* env = std::getenv("DATAMARKET_OUT_DIR"); env && *env) dir = env;
  if (!opts.out.empty()) dir = opts.out;
  fs::create_directories(dir);
  return dir;
}

fs::path resolve(const CliConfig& cfg, const std::string& path) {
  fs::path p(path);
  return p.is_absolute() ? p : cfg.base_dir / p;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  return out;
}

std::optional<std::pair<double, double>> parse_range(const std::string& text) {
  if (text.empty()) return std::nullopt;
  auto colon = text.find(':');
  if (colon == std::string::npos) throw ArgumentError("expected MIN:MAX, got '" + text + "'");
  return std::make_pair(std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1)));
}

int simulate(const Options& opts, const sim::ExperimentSpec& preset) {
  auto cfg = load_cli_config(opts, preset);
  auto range = parse_range(opts.expect_breakdown);
  const auto& spec = cfg.experiment;
  sim::ExperimentResult result;
  if (preset.name == "fig4") {
    result = sim::run_fig4(spec);
  } else if (preset.name == "fig5") {
    result = sim::run_fig5(spec);
  } else {
    result = sim::run_fig6(spec);
  }

  auto dir = out_dir(opts);
  {
    auto out = open_out(dir / (preset.name + "_trials.csv"));
    sim::write_trials_csv(result, out);
  }
  {
    auto out = open_out(dir / (preset.name + "_summary.csv"));
    sim::write_summary_csv(result, out);
  }
  {
    auto out = open_out(dir / (preset.name + "_breakdown.csv"));
    sim::write_breakdown_csv(result, out);
  }

  bool gate_ok = result.privacy_violations == 0;
  std::cout << result.experiment << ": " << result.trials.size() << " trials;";
  for (const auto& b : result.breakdowns) {
    std::cout << ' ' << b.strategy;
    if (spec.rep_shares.size() > 1) std::cout << "@rep=" << csv::number(b.rep_share);
    std::cout << " breakdown=" << csv::number(b.practical);
    if (range && (b.practical < range->first || b.practical > range->second)) gate_ok = false;
  }
  std::cout << "; privacy violations=" << result.privacy_violations << '\n';
  return gate_ok ? kExitOk : kExitThreshold;
}

int run_consensus_verb(const Options& opts) {
  auto cfg = load_cli_config(opts, sim::fig5_spec());
  const auto& sc = cfg.experiment.base;
  std::vector<consensus::ConsensusRow> rows;
  const SeededRng base(sc.seed);
  double total = 0.0;
  for (int t = 0; t < sc.trials; ++t) {
    auto rng = derive_trial_rng(base, static_cast<std::uint64_t>(t));
    auto population = build_population(sc, rng.substream(1));
    std::vector<consensus::Reading> readings;
    for (const auto& a : population) readings.emplace_back(a.id, a.measurement);
    auto crng = rng.substream(2);
    consensus::PrivacyLedger ledger;
    auto res = consensus::run_consensus(readings, sc.consensus, crng, ledger);
    consensus::ConsensusRow row;
    row.trial = t;
    row.strategy = sc.consensus.label();
    row.n = readings.size();
    row.g = res.grouping.g;
    row.s = res.grouping.s_effective;
    row.adversary_share = sc.adversary_fraction;
    row.value = res.value;
    row.deviation = std::abs(res.value - sc.mu);
    total += row.deviation;
    rows.push_back(row);
  }
  auto out = open_out(out_dir(opts) / "consensus.csv");
  consensus::write_consensus_csv(rows, out);
  std::cout << sc.consensus.label() << ": mean deviation "
            << csv::number(total / sc.trials) << " over " << sc.trials << " trials\n";
  return kExitOk;
}

int run_elect_verb(const Options& opts) {
  auto cfg = load_cli_config(opts, sim::fig6_spec());
  const auto& sc = cfg.experiment.base;
  SeededRng rng(sc.seed);
  PopulationOptions popts;
  popts.with_reputation_matrix = true;
  auto agents = build_population(sc, rng.substream(1), popts);
  auto vrng = rng.substream(2);
  auto election = voting::elect_committee(agents, sc.voting, vrng);
  auto out = open_out(out_dir(opts) / "election.csv");
  voting::write_transcript_csv(election, out);
  int adversaries = 0;
  for (auto id : election.winners()) {
    if (agents[id.value].is_adversary) ++adversaries;
  }
  for (std::size_t r = 0; r < election.groups.size(); ++r) {
    std::cout << "round " << r + 1 << ":";
    for (auto id : election.groups[r]) std::cout << ' ' << id.value;
    std::cout << '\n';
  }
  auto cc = voting::complexity_comparison(static_cast<std::uint64_t>(sc.n_agents),
                                          static_cast<std::uint64_t>(sc.voting.K),
                                          static_cast<std::uint64_t>(sc.voting.J));
  std::cout << "elected adversaries: " << adversaries << "; orderings iterated=" << cc.iterated
            << " repeated=" << cc.repeated << " single-shot=" << cc.single_shot << '\n';
  return kExitOk;
}

std::vector<valuation::DataPointRef> load_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot read " + path.string());
  return valuation::read_data_points(in);
}

valuation::ObjectiveFunction make_objective(const CliConfig& cfg,
                                            const std::vector<valuation::DataPointRef>& points) {
  if (cfg.shapley.objective == "additive") {
    for (const auto& p : points) {
      if (!p.label) throw ArgumentError("additive objective needs a label column");
    }
    valuation::ObjectiveFunction f;
    f.descriptor = "additive(label)";
    f.evaluate = [](std::span<const valuation::DataPointRef> subset) {
      double total = 0.0;
      for (const auto& p : subset) total += *p.label;
      return total;
    };
    return f;
  }
  auto holdout = cfg.shapley.holdout.empty() ? points : load_points(resolve(cfg, cfg.shapley.holdout));
  return valuation::regression_objective(points, holdout);
}

int run_shapley_verb(const Options& opts) {
  auto cfg = load_cli_config(opts, sim::fig5_spec());
  if (cfg.shapley.data.empty()) throw ConfigError("shapley.data", 0, "no data file configured");
  auto points = load_points(resolve(cfg, cfg.shapley.data));
  auto v = make_objective(cfg, points);
  SeededRng rng(cfg.experiment.base.seed);
  auto report = valuation::shapley(points, v, static_cast<std::size_t>(cfg.shapley.samples), rng);
  auto work = valuation::assign_work(report, cfg.shapley.max_work);

  auto out = open_out(out_dir(opts) / "shapley.csv");
  valuation::write_shapley_csv(report, out);
  std::cout << "objective " << v.descriptor << ", "
            << (report.method == valuation::ShapleyMethod::Exact ? "exact" : "sampled") << '\n';
  for (std::size_t i = 0; i < report.agents.size(); ++i) {
    std::cout << "agent " << report.agents[i].value << " psi=" << csv::number(report.psi[i]) << '\n';
  }
  for (const auto& w : work) {
    std::cout << "agent " << w.agent.value << " work_units=" << w.work_units << '\n';
  }
  return kExitOk;
}

int run_market_demo(const Options& opts) {
  auto cfg = load_cli_config(opts, sim::fig5_spec());
  auto sc = cfg.experiment.base;
  const int q = cfg.market.coalitions;
  SeededRng rng(sc.seed);

  // One population per quadrant; each agent holds one labelled point of a
  // shared linear signal.
  std::vector<Agent> everyone;
  std::vector<valuation::CoalitionBatch> batches;
  auto data_rng = rng.substream(1);
  for (int c = 0; c < q; ++c) {
    PopulationOptions popts;
    popts.quadrant = QuadrantId{c + 1};
    auto pop = build_population(sc, rng.substream(10 + static_cast<std::uint64_t>(c)), popts);
    valuation::CoalitionBatch batch;
    batch.coalition.quadrant = popts.quadrant;
    batch.coalition.timestamp = c;
    for (auto& a : pop) {
      a.id = AgentId{everyone.size()};
      everyone.push_back(a);
      batch.coalition.members.push_back(a.id);
      double x1 = data_rng.normal(0, 1), x2 = data_rng.normal(0, 1);
      double noise = a.is_adversary ? data_rng.normal(0, 5) : data_rng.normal(0, 0.1);
      batch.batch.push_back({a.id, {x1, x2}, 2 * x1 + 3 * x2 + noise});
    }
    batches.push_back(std::move(batch));
  }

  std::set<AgentId> registry;
  for (const auto& a : everyone) registry.insert(a.id);
  auto oracle = verification::simulated_oracle(registry, everyone);
  verification::AuditLog audit;
  auto vrng = rng.substream(2);
  std::map<AgentId, verification::VerificationOutcome> outcomes;
  for (const auto& a : everyone) {
    outcomes[a.id] = verification::verify_agent(a.id, a.measurement, a.quadrant, 0, 0, 0, oracle, vrng, &audit);
  }

  // Holdout shared by every coalition's objective.
  std::vector<valuation::DataPointRef> holdout;
  for (int i = 0; i < 16; ++i) {
    double x1 = data_rng.normal(0, 1), x2 = data_rng.normal(0, 1);
    holdout.push_back({AgentId{1000000 + static_cast<std::uint64_t>(i)}, {x1, x2}, 2 * x1 + 3 * x2});
  }
  std::vector<valuation::ObjectiveFunction> objectives;
  for (auto& b : batches) {
    objectives.push_back(valuation::regression_objective(b.batch, holdout));
    b.coalition.objective = objectives.back().descriptor;
  }
  auto chain_rng = rng.substream(3);
  auto chain = valuation::run_work_chain(batches, objectives, cfg.shapley.max_work, chain_rng,
                                         static_cast<std::size_t>(cfg.shapley.samples));

  market::Market m;
  for (std::size_t c : chain.admitted) {
    const auto& b = batches[c];
    const AgentId seller = b.coalition.members.front();
    market::Listing l;
    l.dataset_id = "Q" + std::to_string(b.coalition.quadrant.q) + "-t" + std::to_string(b.coalition.timestamp);
    l.quadrant = b.coalition.quadrant;
    l.tick = b.coalition.timestamp;
    l.seller = seller;
    l.provenance = {outcomes[seller].commitment, outcomes[seller]};
    l.objective_descriptor = b.coalition.objective;
    l.objective_value = objectives[c](b.batch);
    l.ask_price = cfg.market.ask_price;
    l.metadata = "points=" + std::to_string(b.batch.size());
    m.list_dataset(l);

    market::Bid low{AgentId{2000000}, l.dataset_id, market::Right::AccessFull, "", l.ask_price / 2};
    market::Bid ok{AgentId{2000001}, l.dataset_id, market::Right::AccessPartial, "features", l.ask_price};
    auto sale = m.settle_first({low, ok});
    auto psi = c == 0 ? valuation::shapley(b.batch, objectives[c], static_cast<std::size_t>(cfg.shapley.samples), chain_rng)
                      : chain.stages[c - 1].report;
    m.distribute_reward(sale, psi);
  }

  auto dir = out_dir(opts);
  auto records = m.ledger().records();
  market::write_ledger(records, dir / cfg.market.ledger);
  {
    auto out = open_out(dir / "audit.csv");
    audit.write_csv(out);
  }
  std::cout << "work chain: " << chain.stages.size() << " stages, " << chain.admitted.size()
            << " coalitions admitted; ledger: " << records.size() << " records -> "
            << (dir / cfg.market.ledger).string() << '\n';
  return kExitOk;
}

int run_verify_ledger(const Options& opts) {
  auto cfg = load_cli_config(opts, sim::fig5_spec());
  fs::path path = opts.ledger.empty() ? out_dir(opts) / cfg.market.ledger : fs::path(opts.ledger);
  auto check = market::verify_ledger_file(path);
  if (check.ok) {
    std::cout << path.string() << ": " << check.records << " records, chain intact\n";
    return kExitOk;
  }
  std::cerr << path.string() << ": verification failed: " << check.problem << '\n';
  return kExitThreshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd-sourced spatial data market: simulations and protocol tools"};
  app.require_subcommand(1);
  Options opts;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "YAML configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "output directory (default $DATAMARKET_OUT_DIR or ./out)");
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--jobs", opts.jobs, "concurrent trials")->check(CLI::PositiveNumber);
  };

  struct Verb {
    const char* name;
    const char* help;
  };
  const Verb verbs[] = {
      {"simulate-fig4", "data-poisoning sweep at N=1000"},
      {"simulate-fig5", "breakdown analysis at N=20"},
      {"simulate-fig6", "voting plus mean-median heatmap"},
      {"consensus", "repeated consensus for one scenario"},
      {"elect", "one committee election"},
      {"shapley", "Shapley values for a CSV batch"},
      {"market-demo", "verification, work chain and market on synthetic data"},
      {"verify-ledger", "check a ledger file's hash chain"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& v : verbs) {
    auto* sub = app.add_subcommand(v.name, v.help);
    add_common(sub);
    subs[v.name] = sub;
  }
  for (const char* fig : {"simulate-fig4", "simulate-fig5", "simulate-fig6"}) {
    subs[fig]->add_option("--expect-breakdown", opts.expect_breakdown,
                          "MIN:MAX; exit 3 if any practical breakdown falls outside");
  }
  subs["verify-ledger"]->add_option("--ledger", opts.ledger, "ledger file (default <out>/ledger.tsv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (const auto& [name, sub] : subs) {
    if (sub->parsed() && sub->count("--seed")) opts.seed = seed;
  }

  try {
    if (subs["simulate-fig4"]->parsed()) return simulate(opts, sim::fig4_spec());
    if (subs["simulate-fig5"]->parsed()) return simulate(opts, sim::fig5_spec());
    if (subs["simulate-fig6"]->parsed()) return simulate(opts, sim::fig6_spec());
    if (subs["consensus"]->parsed()) return run_consensus_verb(opts);
    if (subs["elect"]->parsed()) return run_elect_verb(opts);
    if (subs["shapley"]->parsed()) return run_shapley_verb(opts);
    if (subs["market-demo"]->parsed()) return run_market_demo(opts);
    if (subs["verify-ledger"]->parsed()) return run_verify_ledger(opts);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
