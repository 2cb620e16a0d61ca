#include "halop/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <thread>

namespace halop {

using nlohmann::json;

namespace {

std::string num(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

}  // namespace

Trajectory rollout_episode(Agent& agent, const EpisodeData& episode, const VolumeSchedule& schedule, ActMode mode,
                           std::uint64_t seed) {
  const auto& spec = episode.spec;
  MarketSimulator sim(episode, schedule, agent.config().state);
  Observation obs = sim.reset();
  Rng rng(seed);
  Trajectory tr;
  tr.stock_id = spec.stock_id;
  tr.day = spec.trading_day;
  for (int t = 0; t < spec.horizon; ++t) {
    StepRecord rec;
    rec.input = make_step_input(obs, spec);
    rec.decision = agent.act(rec.input, mode, rng);
    rec.old_log_prob = joint_log_prob(rec.decision);
    rec.value_bps = rec.decision.value;
    Order order{t, OrderKind::Limit, rec.decision.limit_price, sim.required_volume()};
    obs = sim.step(order).next;
    tr.steps.push_back(std::move(rec));
  }
  tr.trace = sim.trace();
  tr.settlement = sim.settle();
  tr.reward_bps = tr.settlement.reward_bps;
  return tr;
}

std::vector<Trajectory> rollout_day(Agent& agent, const std::vector<const EpisodeData*>& episodes,
                                    const ScheduleFn& schedule, ActMode mode, std::uint64_t seed, int threads,
                                    std::vector<std::string>* warnings) {
  const std::size_t n = episodes.size();
  std::vector<std::optional<Trajectory>> slots(n);
  std::vector<std::string> errors(n);
  auto work = [&](std::size_t i) {
    try {
      slots[i] = rollout_episode(agent, *episodes[i], schedule(*episodes[i]), mode, mix_seed(seed, i));
    } catch (const std::exception& e) {
      errors[i] = episodes[i]->spec.stock_id + "_" + episodes[i]->spec.trading_day + ": " + e.what();
    }
  };
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      out.push_back(std::move(*slots[i]));
    } else if (warnings) {
      warnings->push_back("skipped episode " + errors[i]);
    }
  }
  return out;
}

RolloutBatch make_batch(const std::vector<Trajectory>& trajectories, const PpoConfig& cfg, double value_scale) {
  RolloutBatch b;
  for (const auto& tr : trajectories) {
    std::vector<double> values;
    for (const auto& s : tr.steps) values.push_back(s.value_bps);
    const Advantages adv = compute_advantages(values, tr.reward_bps, cfg.gamma, cfg.lambda);
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      b.steps.push_back(&tr.steps[t]);
      b.samples.push_back({tr.steps[t].old_log_prob, adv.advantages[t], adv.targets[t] / value_scale});
    }
  }
  return b;
}

EpochPlan EpochPlan::random(const std::vector<std::string>& train_days, int rounds, std::uint64_t seed) {
  if (rounds > 0 && train_days.empty()) throw std::invalid_argument("no training days");
  EpochPlan p;
  Rng rng(mix_seed(seed, 0x0e90c4));
  for (int r = 0; r < rounds; ++r) p.days.push_back(train_days[rng.below(train_days.size())]);
  return p;
}

void TrainConfig::validate() const {
  agent.validate();
  ppo.validate();
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (eval_days < 0) throw std::invalid_argument("eval_days must be >= 0");
  if (test_days < 0) throw std::invalid_argument("test_days must be >= 0");
}

json to_json(const TrainConfig& c) {
  return json{{"agent", to_json(c.agent)},
              {"ppo", to_json(c.ppo)},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"eval_days", c.eval_days},
              {"test_days", c.test_days},
              {"threads", c.threads},
              {"eval_greedy", c.eval_greedy},
              {"log_trajectories", c.log_trajectories}};
}

TrainConfig train_config_from_json(const json& j) {
  static const std::set<std::string> known{"agent",     "ppo",       "seed",    "eval_every",  "eval_days",
                                           "test_days", "threads", "eval_greedy", "log_trajectories"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("unknown training config key '" + k + "'");
  }
  TrainConfig c;
  if (j.contains("agent")) c.agent = agent_config_from_json(j.at("agent"));
  if (j.contains("ppo")) c.ppo = ppo_config_from_json(j.at("ppo"));
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_days = j.value("eval_days", c.eval_days);
  c.test_days = j.value("test_days", c.test_days);
  c.threads = j.value("threads", c.threads);
  c.eval_greedy = j.value("eval_greedy", c.eval_greedy);
  c.log_trajectories = j.value("log_trajectories", c.log_trajectories);
  c.validate();
  return c;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_days(const std::vector<std::string>& days,
                                                                         int eval_days) {
  std::vector<std::string> sorted = days;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = std::min<std::size_t>(sorted.size(), static_cast<std::size_t>(std::max(0, eval_days)));
  std::vector<std::string> train(sorted.begin(), sorted.end() - static_cast<std::ptrdiff_t>(k));
  std::vector<std::string> eval(sorted.end() - static_cast<std::ptrdiff_t>(k), sorted.end());
  return {train, eval};
}

std::vector<const EpisodeData*> episodes_of(const Dataset& data, const std::vector<std::string>& days) {
  std::vector<const EpisodeData*> out;
  for (const auto& d : days) {
    for (const auto& ep : data.day(d)) out.push_back(&ep);
  }
  return out;
}

TrainResult train(const Dataset& data, const std::vector<std::string>& train_days,
                  const std::vector<std::string>& eval_days, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir, std::unique_ptr<Agent>* final_agent) {
  cfg.validate();
  const std::set<std::string> tset(train_days.begin(), train_days.end());
  for (const auto& d : eval_days) {
    if (tset.count(d)) throw std::invalid_argument("day " + d + " is in both the training and evaluation sets");
  }
  for (const auto& d : train_days) (void)data.day(d);
  for (const auto& d : eval_days) (void)data.day(d);
  std::filesystem::create_directories(out_dir);

  auto agent = std::make_unique<Agent>(cfg.agent, mix_seed(cfg.seed, 1));
  Optimizer opt(cfg.ppo.optimizer, cfg.ppo.learning_rate);
  Rng update_rng(mix_seed(cfg.seed, 2));
  const EpochPlan plan = EpochPlan::random(train_days, cfg.ppo.rounds, cfg.seed);
  const ScheduleFn twap = [](const EpisodeData& e) { return twap_schedule(e.spec.horizon); };
  const std::vector<const EpisodeData*> eval_eps = episodes_of(data, eval_days);

  {
    auto cfg_out = open_out(out_dir / "config.json");
    cfg_out << to_json(cfg).dump(2) << '\n';
  }
  save_agent(out_dir / "checkpoint_initial.json", *agent);

  TrainResult result;
  auto curve_out = open_out(out_dir / "learning_curve.csv");
  curve_out << "round,train_day,mean_reward_bps,clip_fraction,approx_kl,entropy,policy_loss,value_loss,grad_norm,"
               "aborted\n";
  auto eval_out = open_out(out_dir / "eval.csv");
  eval_out << "round,n,return_bps,std_bps,t_value,pnl_bps,violation_rate\n";
  std::ofstream traj_out;
  if (cfg.log_trajectories) traj_out = open_out(out_dir / "trajectories.jsonl");

  auto evaluate = [&](int round) {
    if (eval_eps.size() < 2) return;
    Strategy s;
    s.kind = StrategyKind::Policy;
    s.agent = agent.get();
    s.mode = cfg.eval_greedy ? ActMode::Greedy : ActMode::Sample;
    s.seed = mix_seed(cfg.seed, 3);
    std::vector<std::string> errors;
    const auto results = run_strategy(s, eval_eps, twap, cfg.agent.state, &errors);
    for (auto& e : errors) result.warnings.push_back("evaluation skipped " + e);
    if (results.size() < 2) return;
    const MetricsReport m = compute_metrics(results);
    result.evals.push_back({round, m});
    eval_out << round << ',' << m.n << ',' << num(m.return_bps) << ',' << num(m.std_bps) << ',' << num(m.t_value)
             << ',' << num(m.pnl_bps) << ',' << num(m.violation_rate) << '\n';
    eval_out.flush();
    if (round > 0 && (result.best_round < 0 || m.pnl_bps > result.best_pnl)) {
      result.best_round = round;
      result.best_pnl = m.pnl_bps;
      save_agent(out_dir / "checkpoint_best.json", *agent);
    }
  };

  evaluate(0);
  for (int r = 0; r < cfg.ppo.rounds; ++r) {
    const std::string& day = plan.days[static_cast<std::size_t>(r)];
    const auto eps = episodes_of(data, {day});
    auto trajs = rollout_day(*agent, eps, twap, ActMode::Train, mix_seed(cfg.seed, 1000 + r), cfg.threads,
                             &result.warnings);
    LearningCurveRow row;
    row.round = r + 1;
    row.day = day;
    if (!trajs.empty()) {
      double sum = 0.0;
      for (const auto& t : trajs) sum += t.reward_bps;
      row.mean_reward_bps = sum / static_cast<double>(trajs.size());
      if (cfg.log_trajectories) {
        for (const auto& t : trajs) {
          for (std::size_t k = 0; k < t.steps.size(); ++k) {
            json j = decision_to_json(t.steps[k].decision, t.steps[k].input);
            j["round"] = r + 1;
            j["stock"] = t.stock_id;
            j["day"] = t.day;
            j["step"] = k;
            traj_out << j.dump() << '\n';
          }
        }
      }
      const RolloutBatch batch = make_batch(trajs, cfg.ppo, cfg.agent.value_scale);
      AgentPpoModel model(*agent, batch);
      row.diag = ppo_update(model, batch.samples, cfg.ppo, opt, update_rng);
      if (row.diag.aborted) {
        result.warnings.push_back("round " + std::to_string(r + 1) + ": " + row.diag.message);
        std::cerr << "warning: round " << r + 1 << ": " << row.diag.message << '\n';
      }
    }
    const auto& d = row.diag;
    curve_out << row.round << ',' << row.day << ',' << num(row.mean_reward_bps) << ',' << num(d.clip_fraction) << ','
              << num(d.approx_kl) << ',' << num(d.entropy) << ',' << num(d.policy_loss) << ',' << num(d.value_loss)
              << ',' << num(d.grad_norm) << ',' << (d.aborted ? 1 : 0) << '\n';
    curve_out.flush();
    result.curve.push_back(std::move(row));
    const bool last = r + 1 == cfg.ppo.rounds;
    if (last || (cfg.eval_every > 0 && (r + 1) % cfg.eval_every == 0)) evaluate(r + 1);
  }
  if (cfg.ppo.rounds > 0) {
    save_agent(out_dir / "checkpoint_final.json", *agent);
    if (result.best_round < 0) {
      result.best_round = cfg.ppo.rounds;
      save_agent(out_dir / "checkpoint_best.json", *agent);
    }
  }
  if (final_agent) *final_agent = std::move(agent);
  return result;
}

}  // namespace halop
