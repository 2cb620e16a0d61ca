#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "halop/config.hpp"
#include "halop/episode_io.hpp"
#include "halop/eval_metrics.hpp"
#include "halop/halop_agent.hpp"
#include "halop/trainer.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;
using namespace halop;

struct CliError : std::runtime_error {
  CliError(std::string kind, const std::string& what) : std::runtime_error(what), kind(std::move(kind)) {}
  std::string kind;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("io", "cannot write " + path);
  out << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_generate(const std::string& config, const std::string& out_dir, std::uint64_t seed) {
  DataGenConfig cfg = config.empty() ? DataGenConfig{} : data_config_from_json(read_json_file(config));
  const Dataset ds = generate_dataset(cfg, seed);
  write_dataset(out_dir, ds);
  std::size_t n = 0;
  for (const auto& [day, eps] : ds.by_day) n += eps.size();
  std::cout << json{{"episodes", n}, {"stocks", ds.manifest.stocks.size()}, {"days", ds.manifest.days.size()},
                    {"out", out_dir}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_train(const std::string& config, const std::string& data_dir, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
  TrainConfig cfg = config.empty() ? TrainConfig{} : train_config_from_json(read_json_file(config));
  if (seed) cfg.seed = *seed;
  const Dataset ds = load_dataset(data_dir);
  const auto [usable_days, test_days] = split_days(ds.manifest.days, cfg.test_days);
  const auto [train_days, eval_days] = split_days(usable_days, cfg.eval_days);
  const TrainResult r = train(ds, train_days, eval_days, cfg, out_dir);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  json summary{{"rounds", cfg.ppo.rounds},
               {"train_days", train_days.size()},
               {"eval_days", eval_days.size()},
               {"test_days", test_days.size()},
               {"best_round", r.best_round}};
  if (!r.evals.empty()) summary["final_eval"] = to_json(r.evals.back().metrics);
  std::cout << summary.dump() << '\n';
  return 0;
}

struct BacktestArgs {
  std::string checkpoint;
  std::string strategy = "policy";
  std::string schedule = "twap";
  std::string data_dir;
  std::string report;
  std::string days;
  int last_days = 0;
  std::int64_t offset_ticks = -1;
  std::string mode = "greedy";
  std::string trajectory_log;
  std::uint64_t seed = 0;
};

int cmd_backtest(const BacktestArgs& a) {
  const Dataset ds = load_dataset(a.data_dir);
  std::vector<std::string> days = a.days.empty() ? ds.manifest.days : split_list(a.days);
  if (a.last_days > 0 && static_cast<std::size_t>(a.last_days) < days.size()) {
    days.erase(days.begin(), days.end() - a.last_days);
  }
  const auto episodes = episodes_of(ds, days);

  Strategy s;
  s.kind = strategy_kind_from_string(a.strategy);
  s.offset_ticks = a.offset_ticks;
  s.seed = a.seed;
  std::optional<Agent> agent;
  PublicStateConfig state_cfg;
  if (s.kind == StrategyKind::Policy) {
    if (a.checkpoint.empty()) throw CliError("usage", "the policy strategy needs --checkpoint");
    agent.emplace(load_agent(a.checkpoint));
    s.agent = &*agent;
    state_cfg = agent->config().state;
    if (a.mode == "greedy") {
      s.mode = ActMode::Greedy;
    } else if (a.mode == "sample") {
      s.mode = ActMode::Sample;
    } else {
      throw CliError("usage", "--mode must be greedy or sample");
    }
  }

  std::vector<std::string> errors;
  ScheduleFn schedule;
  if (a.schedule == "twap") {
    schedule = [](const EpisodeData& e) { return twap_schedule(e.spec.horizon); };
  } else if (a.schedule == "vwap") {
    schedule = [&](const EpisodeData& e) {
      std::vector<std::vector<double>> history;
      for (const auto& d : ds.manifest.days) {
        if (d >= e.spec.trading_day) break;
        for (const auto& prior : ds.day(d)) {
          if (prior.spec.stock_id == e.spec.stock_id) history.push_back(interval_volume_curve(prior));
        }
      }
      bool fell_back = history.empty();
      VolumeSchedule v = history.empty() ? twap_schedule(e.spec.horizon) : vwap_schedule(history, 21, &fell_back);
      if (fell_back) errors.push_back(e.spec.stock_id + "_" + e.spec.trading_day + ": no volume history, used TWAP");
      return v;
    };
  } else {
    throw CliError("usage", "--schedule must be twap or vwap");
  }

  std::ofstream traj;
  DecisionSink sink;
  if (!a.trajectory_log.empty()) {
    traj.open(a.trajectory_log, std::ios::binary);
    if (!traj) throw CliError("io", "cannot write " + a.trajectory_log);
    sink = [&](const EpisodeData& ep, int step, const HalopDecision& d, const StepInput& in) {
      json j = decision_to_json(d, in);
      j["stock"] = ep.spec.stock_id;
      j["day"] = ep.spec.trading_day;
      j["step"] = step;
      traj << j.dump() << '\n';
    };
  }
  auto results = run_strategy(s, episodes, schedule, state_cfg, &errors, sink);
  std::string name = a.strategy;
  if (s.kind == StrategyKind::FixedOffset) name += "(" + std::to_string(a.offset_ticks) + ")";
  if (s.kind == StrategyKind::Policy) name += "(" + to_string(agent->config().kind) + ")";
  const BacktestReport rep = make_report(name, a.schedule, std::move(results), errors);
  write_text(a.report, to_json(rep).dump(2) + "\n");
  for (const auto& e : rep.errors) std::cerr << "warning: " << e << '\n';
  std::cout << report_json(rep, false).dump() << '\n';
  return 0;
}

int cmd_report(const std::string& in, const std::string& group_by, const std::string& format, const std::string& out) {
  if (!group_by.empty() && group_by != "price-band") throw CliError("usage", "--group-by must be price-band");
  const bool by_band = !group_by.empty();
  const BacktestReport rep = backtest_report_from_json(read_json_file(in));
  std::string text;
  if (format == "json") {
    text = report_json(rep, by_band).dump(2) + "\n";
  } else if (format == "csv") {
    text = report_csv(rep, by_band);
  } else if (format == "md") {
    text = report_markdown(rep, by_band);
  } else {
    throw CliError("usage", "--format must be json, csv or md");
  }
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return 0;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage hybrid action-space limit-order execution"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option_function<std::uint64_t>(
         "--seed",
         [&](const std::uint64_t& s) {
           seed = s;
           seed_given = true;
         },
         "Seed for all randomness")
      ->capture_default_str();

  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand("generate-data", "Write a synthetic dataset");
  gen->add_option("--config", gen_config, "Data generation config (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory")->required();

  std::string tr_config, tr_data, tr_out;
  auto* tr = app.add_subcommand("train", "Train an agent with PPO");
  tr->add_option("--config", tr_config, "Training config (JSON)")->check(CLI::ExistingFile);
  tr->add_option("--data", tr_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", tr_out, "Run directory")->required();

  BacktestArgs bt;
  auto* back = app.add_subcommand("backtest", "Evaluate a strategy on a dataset");
  back->add_option("--checkpoint", bt.checkpoint, "Agent checkpoint for the policy strategy");
  back->add_option("--strategy", bt.strategy, "policy | market-order | fixed-offset")->capture_default_str();
  back->add_option("--schedule", bt.schedule, "twap | vwap")->capture_default_str();
  back->add_option("--data", bt.data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  back->add_option("--report", bt.report, "Report path (JSON)")->required();
  back->add_option("--days", bt.days, "Comma-separated YYYYMMDD days (default: all)");
  back->add_option("--last-days", bt.last_days, "Keep only the most recent N of the selected days");
  back->add_option("--offset", bt.offset_ticks, "Tick offset for fixed-offset")->capture_default_str();
  back->add_option("--mode", bt.mode, "greedy | sample")->capture_default_str();
  back->add_option("--trajectory-log", bt.trajectory_log, "JSON-lines decision log");

  std::string rep_in, rep_group, rep_format = "json", rep_out;
  auto* rep = app.add_subcommand("report", "Render a backtest report");
  rep->add_option("--in", rep_in, "Backtest report (JSON)")->required()->check(CLI::ExistingFile);
  rep->add_option("--group-by", rep_group, "price-band");
  rep->add_option("--format", rep_format, "json | csv | md")->capture_default_str();
  rep->add_option("--out", rep_out, "Write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_generate(gen_config, gen_out, seed);
    if (*tr) return cmd_train(tr_config, tr_data, tr_out, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt);
    if (*back) {
      bt.seed = seed;
      return cmd_backtest(bt);
    }
    if (*rep) return cmd_report(rep_in, rep_group, rep_format, rep_out);
  } catch (const CliError& e) {
    print_error(e.kind, e.what());
    return 2;
  } catch (const LoadError& e) {
    print_error("data", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    print_error("invalid-argument", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
  return 0;
}
