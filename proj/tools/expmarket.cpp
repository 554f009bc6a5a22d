#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "expmarket/integrity.hpp"
#include "expmarket/sim/scenario.hpp"

namespace fs = std::filesystem;
using namespace expmarket;

namespace {

constexpr int kOk = 0;
constexpr int kViolation = 1;
constexpr int kUsage = 2;

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(parse_double(item));
    } catch (const Error&) {
      throw Error(Errc::ConfigError, flag + ": not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw Error(Errc::ConfigError, flag + ": empty list");
  return out;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("EXPMARKET_SEED")) {
    try {
      return parse_uint(env);
    } catch (const Error&) {
      throw Error(Errc::ConfigError, std::string("EXPMARKET_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(Errc::ConfigError, "cannot write " + p.string());
  return f;
}

// --- verify-convergence ----------------------------------------------------

struct VerifyArgs {
  std::size_t robots = 2, forays = 9, trials = 100;
  std::string mu = "10", sigma = "2";
  std::string policy = "union";
  std::string fault = "none";
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned jobs = 1;
};

int verify_convergence(const VerifyArgs& a) {
  ConvergenceParams p;
  p.robots = a.robots;
  p.forays = a.forays;
  p.trials = a.trials;
  p.mu = parse_list(a.mu, "--mu");
  p.sigma = parse_list(a.sigma, "--sigma");
  p.seed = resolve_seed(a.seed);
  p.jobs = a.jobs;
  if (a.policy == "union") {
    p.policy = CommutationPolicy::union_policy();
  } else if (a.policy == "match" || a.policy == "match-inliers") {
    p.policy = CommutationPolicy::match(ChoiceKind::Inliers);
  } else if (a.policy == "match-fabmap") {
    p.policy = CommutationPolicy::match(ChoiceKind::Fabmap);
  } else if (a.policy == "match-path-memory") {
    p.policy = CommutationPolicy::match(ChoiceKind::PathMemory);
  } else {
    throw Error(Errc::ConfigError, "--policy: unknown policy " + a.policy);
  }
  if (a.fault == "lhs" || a.fault == "coin") {
    p.policy.kind = CommutationKind::Match;
    p.policy.choice.kind = a.fault == "lhs" ? ChoiceKind::Lhs : ChoiceKind::Coin;
    p.policy.allow_nonsymmetric = true;
  } else if (a.fault != "none") {
    throw Error(Errc::ConfigError, "--inject-fault: expected none, lhs or coin");
  }
  p.validate();

  const auto rep = monte_carlo_convergence(p);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    auto f = open_out(fs::path(a.out) / "convergence.csv");
    f << "trial,k,robot,nodes,digest\n";
    for (std::size_t t = 0; t < rep.trials.size(); ++t) {
      const auto& tr = rep.trials[t];
      for (std::size_t k = 0; k < tr.node_counts.size(); ++k)
        for (std::size_t r = 0; r < tr.node_counts[k].size(); ++r)
          f << t << ',' << k + 1 << ',' << r << ',' << tr.node_counts[k][r] << ','
            << tr.digest_prefix[k][r] << '\n';
    }
    f << "summary,,,divergence_events," << rep.divergence_events << '\n';
    auto h = open_out(fs::path(a.out) / "mutual_history.csv");
    h << "robot_i,robot_j,mean_common_states\n";
    for (std::size_t i = 0; i < rep.R; ++i)
      for (std::size_t j = 0; j < rep.R; ++j)
        h << i << ',' << j << ',' << format_double(rep.mutual_history[i][j]) << '\n';
  }
  std::cout << "R=" << rep.R << " K=" << rep.K << " M=" << rep.M
            << " divergence_events=" << rep.divergence_events << '\n';
  return rep.divergence_events == 0 ? kOk : kViolation;
}

// --- run-scenario ----------------------------------------------------------

struct ScenarioArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::string out = "out";
  unsigned jobs = 1;
};

int run_scenario_cmd(const ScenarioArgs& a) {
  const auto cfg = sim::load_scenario(a.config);
  const auto seed = resolve_seed(a.seed);
  const auto res = sim::run_scenario(cfg, seed, a.trials, a.jobs);
  sim::write_scenario(a.out, cfg, res);
  for (const auto& v : res.variants) {
    std::vector<double> mean_drop;
    for (const auto& t : v.trials) mean_drop.push_back(sim::summarise(t).dropout_mean_m);
    std::cout << v.name << ": trials=" << v.trials.size()
              << " mean_dropout_m=" << format_double(sim::mean_std(mean_drop).mean) << '\n';
  }
  return kOk;
}

// --- report ----------------------------------------------------------------

using Table = std::vector<std::map<std::string, std::string>>;

Table read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::ParseError, "missing " + p.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::ParseError, p.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string h;
    while (std::getline(ss, h, ',')) header.push_back(h);
  }
  Table rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != header.size()) {
      throw Error(Errc::ParseError, p.string() + ":" + std::to_string(lineno) + ": wrong field count");
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < f.size(); ++i) row[header[i]] = f[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

const std::string& field(const std::map<std::string, std::string>& row, const std::string& key,
                         const fs::path& p) {
  auto it = row.find(key);
  if (it == row.end()) throw Error(Errc::ParseError, p.string() + ": no column " + key);
  return it->second;
}

struct VariantDir {
  std::string run;
  std::string name;
  std::string strategy;
  std::size_t robots = 0;
  std::vector<fs::path> trials;
};

std::vector<VariantDir> scan_run(const fs::path& dir) {
  const auto summary_path = dir / "summary.json";
  std::ifstream in(summary_path);
  if (!in) throw Error(Errc::ParseError, "missing " + summary_path.string());
  sim::json summary;
  try {
    summary = sim::json::parse(in);
  } catch (const sim::json::exception& e) {
    throw Error(Errc::ParseError, summary_path.string() + ": " + e.what());
  }
  if (!summary.contains("variants") || !summary["variants"].is_array()) {
    throw Error(Errc::ParseError, summary_path.string() + ": no variants list");
  }
  std::vector<VariantDir> out;
  for (const auto& v : summary["variants"]) {
    VariantDir vd;
    vd.run = dir.filename().string();
    if (vd.run.empty()) vd.run = dir.parent_path().filename().string();
    try {
      vd.name = v.at("name").get<std::string>();
      vd.strategy = v.at("strategy").get<std::string>();
      vd.robots = v.at("robots").get<std::size_t>();
    } catch (const sim::json::exception& e) {
      throw Error(Errc::ParseError, summary_path.string() + ": " + e.what());
    }
    std::vector<std::pair<std::size_t, fs::path>> trials;
    if (fs::is_directory(dir / vd.name)) {
      for (const auto& e : fs::directory_iterator(dir / vd.name)) {
        const auto n = e.path().filename().string();
        if (e.is_directory() && n.rfind("trial_", 0) == 0) trials.emplace_back(parse_uint(n.substr(6)), e.path());
      }
    }
    if (trials.empty()) throw Error(Errc::ParseError, (dir / vd.name).string() + ": no trial directories");
    std::sort(trials.begin(), trials.end());
    for (auto& [i, p] : trials) vd.trials.push_back(p);
    out.push_back(std::move(vd));
  }
  return out;
}

int report(const std::string& input, const std::vector<std::string>& compare, std::string out) {
  if (out.empty()) out = (fs::path(input) / "report").string();
  std::vector<VariantDir> variants;
  for (const auto& dir : std::vector<std::string>{input}) {
    auto v = scan_run(dir);
    variants.insert(variants.end(), v.begin(), v.end());
  }
  for (const auto& dir : compare) {
    auto v = scan_run(dir);
    variants.insert(variants.end(), v.begin(), v.end());
  }
  fs::create_directories(out);
  auto cdf = open_out(fs::path(out) / "cdf.csv");
  auto bytes = open_out(fs::path(out) / "bytes_vs_team.csv");
  auto sizes = open_out(fs::path(out) / "map_size_vs_k.csv");
  auto beliefs = open_out(fs::path(out) / "beliefs.csv");
  cdf << "run,strategy,variant,x,p\n";
  bytes << "run,strategy,variant,robots,bytes_sent_per_robot,bytes_received_per_robot,query_bytes_per_robot,match_ops_per_robot\n";
  sizes << "run,strategy,variant,k,mean_nodes\n";
  beliefs << "run,strategy,variant,trial,k,robot,seller,count,mean,variance\n";
  for (const auto& v : variants) {
    std::vector<double> drops;
    std::vector<double> sent, received, query, ops;
    std::map<std::size_t, std::pair<double, std::size_t>> by_k;
    for (std::size_t t = 0; t < v.trials.size(); ++t) {
      const auto& dir = v.trials[t];
      for (const auto& row : read_csv(dir / "dropouts.csv"))
        drops.push_back(parse_double(field(row, "metres", dir)));
      double s = 0, r = 0, q = 0, o = 0;
      const auto brows = read_csv(dir / "bytes.csv");
      for (const auto& row : brows) {
        s += static_cast<double>(parse_uint(field(row, "bytes_sent", dir)));
        r += static_cast<double>(parse_uint(field(row, "bytes_received", dir)));
        q += static_cast<double>(parse_uint(field(row, "query_bytes", dir)));
        o += static_cast<double>(parse_uint(field(row, "match_ops", dir)));
      }
      const double n = brows.empty() ? 1.0 : static_cast<double>(brows.size());
      sent.push_back(s / n);
      received.push_back(r / n);
      query.push_back(q / n);
      ops.push_back(o / n);
      for (const auto& row : read_csv(dir / "map_sizes.csv")) {
        auto& acc = by_k[parse_uint(field(row, "k", dir))];
        acc.first += static_cast<double>(parse_uint(field(row, "nodes", dir)));
        acc.second += 1;
      }
      for (const auto& row : read_csv(dir / "beliefs.csv")) {
        beliefs << v.run << ',' << v.strategy << ',' << v.name << ',' << t << ',' << field(row, "k", dir)
                << ',' << field(row, "robot", dir) << ',' << field(row, "seller", dir) << ','
                << field(row, "count", dir) << ',' << field(row, "mean", dir) << ','
                << field(row, "variance", dir) << '\n';
      }
    }
    for (const auto& [x, p] : sim::failure_distribution(drops))
      cdf << v.run << ',' << v.strategy << ',' << v.name << ',' << format_double(x) << ',' << format_double(p) << '\n';
    bytes << v.run << ',' << v.strategy << ',' << v.name << ',' << v.robots << ','
          << format_double(sim::mean_std(sent).mean) << ',' << format_double(sim::mean_std(received).mean)
          << ',' << format_double(sim::mean_std(query).mean) << ',' << format_double(sim::mean_std(ops).mean)
          << '\n';
    for (const auto& [k, acc] : by_k)
      sizes << v.run << ',' << v.strategy << ',' << v.name << ',' << k << ','
            << format_double(acc.first / static_cast<double>(acc.second)) << '\n';
  }
  std::cout << "report written to " << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experience-map versioning and data-market simulator"};
  app.require_subcommand(1, 1);

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify-convergence", "Randomised convergence check of pairwise trading");
  verify->add_option("--robots", va.robots, "Team size R (>= 2)")->capture_default_str();
  verify->add_option("--forays", va.forays, "Forays per trial K")->capture_default_str();
  verify->add_option("--trials", va.trials, "Monte Carlo trials M")->capture_default_str();
  verify->add_option("--mu", va.mu, "Mean patch size, one value or a comma list per robot")->capture_default_str();
  verify->add_option("--sigma", va.sigma, "Patch size spread, one value or a comma list per robot")->capture_default_str();
  verify->add_option("--policy", va.policy, "union | match-inliers | match-fabmap | match-path-memory")->capture_default_str();
  verify->add_option("--inject-fault", va.fault, "none | lhs | coin (non-symmetric choice policies)")->capture_default_str();
  verify->add_option("--seed", va.seed, "Seed (falls back to EXPMARKET_SEED, then 0)");
  verify->add_option("--out", va.out, "Directory for convergence CSVs");
  verify->add_option("--jobs", va.jobs, "Worker threads")->capture_default_str();

  ScenarioArgs sa;
  auto* scenario = app.add_subcommand("run-scenario", "Run a fleet scenario and write metrics");
  scenario->add_option("--config", sa.config, "Scenario JSON file")->required();
  scenario->add_option("--seed", sa.seed, "Seed (falls back to EXPMARKET_SEED, then 0)");
  scenario->add_option("--trials", sa.trials, "Override the number of trials");
  scenario->add_option("--out", sa.out, "Output directory")->capture_default_str();
  scenario->add_option("--jobs", sa.jobs, "Worker threads")->capture_default_str();

  std::string input, out;
  std::vector<std::string> compare;
  auto* rep = app.add_subcommand("report", "Merge run outputs into plot-ready tables");
  rep->add_option("--input", input, "run-scenario output directory")->required();
  rep->add_option("--compare", compare, "Further output directories");
  rep->add_option("--out", out, "Report directory (default <input>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*verify) return verify_convergence(va);
    if (*scenario) return run_scenario_cmd(sa);
    if (*rep) return report(input, compare, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case Errc::ConfigError:
      case Errc::ParseError:
        for (auto* sub : {verify, scenario, rep})
          if (*sub) std::cerr << sub->help();
        return kUsage;
      default:
        return kViolation;
    }
  }
  return kUsage;
}
