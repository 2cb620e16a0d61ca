#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <functional>

#include "halop/autodiff.hpp"
#include "halop/nets.hpp"
#include "halop/rng.hpp"
#include "test_util.hpp"

using namespace halop;

namespace {

std::vector<double> randn(Rng& rng, std::size_t n, double s = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = s * rng.normal();
  return v;
}

// Checks d loss / d x for a tape expression built from parameter slices "a"
// and "b" against central differences.
void check_op(const std::function<ad::Var(ad::Tape&, ad::Var, ad::Var)>& op, int ra, int ca, int rb, int cb,
              std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  ParameterStore ps;
  auto va = randn(rng, static_cast<std::size_t>(ra * ca));
  for (auto& x : va) x += shift;
  ps.add("a", ra, ca, va);
  ps.add("b", rb, cb, randn(rng, static_cast<std::size_t>(rb * cb)));
  std::vector<double> weights;
  auto loss = [&](bool backward) {
    ad::Tape t;
    ad::Var y = op(t, t.parameter(ps, "a"), t.parameter(ps, "b"));
    if (weights.empty()) weights = randn(rng, static_cast<std::size_t>(t.rows(y) * t.cols(y)));
    ad::Var l = t.sum(t.mul(y, t.constant(t.rows(y), t.cols(y), weights)));
    const double v = t.scalar(l);
    if (backward) {
      t.seed(l, 1.0);
      t.backward();
    }
    return v;
  };
  ps.zero_grad();
  loss(true);
  const std::vector<double> analytic = ps.grad();
  const double h = 1e-5;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double x0 = ps.data()[i];
    ps.data()[i] = x0 + h;
    const double up = loss(false);
    ps.data()[i] = x0 - h;
    const double dn = loss(false);
    ps.data()[i] = x0;
    const double numeric = (up - dn) / (2 * h);
    EXPECT_LE(std::abs(analytic[i] - numeric), 1e-4 * std::max(1.0, std::abs(numeric))) << "param " << i;
  }
}

NetworkConfig small_config(bool two_stage, bool stage1_private, int blocks = 1) {
  NetworkConfig c;
  c.encoder.features = 4;
  c.encoder.window = 8;
  c.encoder.blocks = blocks;
  c.encoder.channels = 6;
  c.encoder.heads = 2;
  c.encoder.pooled = 5;
  c.head.hidden = 7;
  c.two_stage = two_stage;
  c.stage1_private = stage1_private;
  return c;
}

struct Coeffs {
  double m1, s1, m2, s2, v;
};

double plain_loss(PolicyNetwork& net, std::span<const double> window, std::span<const double> priv, const Coeffs& k) {
  const auto rep = net.encode(window);
  const auto p1 = net.actor_head(1, rep, net.uses_private(1) ? priv : std::span<const double>{});
  double l = k.m1 * p1.mean + k.s1 * p1.scale;
  if (net.config().two_stage) {
    const auto p2 = net.actor_head(2, rep, priv);
    l += k.m2 * p2.mean + k.s2 * p2.scale + k.v * net.critic_head(2, rep, priv);
  } else {
    l += k.v * net.critic_head(1, rep, priv);
  }
  return l;
}

void tape_grad(PolicyNetwork& net, std::span<const double> window, std::span<const double> priv, const Coeffs& k) {
  net.params().zero_grad();
  ad::Tape t;
  const ad::Var rep = net.encode(t, window);
  const auto p1 = net.actor(t, 1, rep, net.uses_private(1) ? priv : std::span<const double>{});
  t.seed(p1.mean, k.m1);
  t.seed(p1.scale, k.s1);
  if (net.config().two_stage) {
    const auto p2 = net.actor(t, 2, rep, priv);
    t.seed(p2.mean, k.m2);
    t.seed(p2.scale, k.s2);
    t.seed(net.critic(t, 2, rep, priv), k.v);
  } else {
    t.seed(net.critic(t, 1, rep, priv), k.v);
  }
  t.backward();
}

}  // namespace

TEST(Tape, OpGradients) {
  check_op([](ad::Tape& t, ad::Var a, ad::Var b) { return t.matmul(a, b); }, 3, 4, 4, 2, 1);
  check_op([](ad::Tape& t, ad::Var a, ad::Var b) { return t.matmul_nt(a, b); }, 3, 4, 5, 4, 2);
  check_op([](ad::Tape& t, ad::Var a, ad::Var b) { return t.add(a, b); }, 2, 3, 2, 3, 3);
  check_op([](ad::Tape& t, ad::Var a, ad::Var b) { return t.add_row(a, b); }, 4, 3, 1, 3, 4);
  check_op([](ad::Tape& t, ad::Var a, ad::Var b) { return t.mul(a, t.scale(b, 1.5)); }, 2, 2, 2, 2, 5);
  check_op([](ad::Tape& t, ad::Var a, ad::Var b) { return t.add(t.tanh(a), t.softplus(b)); }, 3, 2, 3, 2, 6);
  check_op([](ad::Tape& t, ad::Var a, ad::Var) { return t.softmax_rows(a); }, 3, 5, 1, 1, 7);
  check_op([](ad::Tape& t, ad::Var a, ad::Var b) { return t.add_scalar(t.slice_cols(a, 1, 3), 2.0); }, 3, 5, 1, 1, 8);
  check_op(
      [](ad::Tape& t, ad::Var a, ad::Var b) {
        const ad::Var parts[] = {a, b};
        return t.concat_cols(parts);
      },
      3, 2, 3, 4, 9);
  check_op([](ad::Tape& t, ad::Var a, ad::Var) { return t.im2col(a, 3, 2, 1); }, 7, 3, 1, 1, 10);
  check_op([](ad::Tape& t, ad::Var a, ad::Var b) { return t.matmul(t.im2col(a, 3, 1, 1), b); }, 5, 2, 6, 3, 11);
}

TEST(Tape, Im2colLayout) {
  ad::Tape t;
  const std::vector<double> x{1, 2, 3, 4, 5};
  const ad::Var p = t.im2col(t.constant(5, 1, x), 3, 2, 1);
  ASSERT_EQ(t.rows(p), 3);
  ASSERT_EQ(t.cols(p), 3);
  const std::vector<double> expect{0, 1, 2, 2, 3, 4, 4, 5, 0};
  EXPECT_EQ(std::vector<double>(t.value(p).begin(), t.value(p).end()), expect);
}

TEST(Tape, ShapeMismatchThrows) {
  ad::Tape t;
  const ad::Var a = t.constant(2, 3, 1.0);
  const ad::Var b = t.constant(2, 3, 1.0);
  EXPECT_THROW(t.matmul(a, b), std::invalid_argument);
  EXPECT_THROW(t.add(a, t.constant(3, 2, 0.0)), std::invalid_argument);
}

TEST(Tape, SweepsOnce) {
  ad::Tape t;
  const ad::Var a = t.constant(1, 1, 2.0);
  const ad::Var y = t.mul(a, a);
  t.seed(y, 1.0);
  t.backward();
  EXPECT_DOUBLE_EQ(t.grad(a)[0], 4.0);
  EXPECT_THROW(t.backward(), std::logic_error);
}

TEST(ParameterStoreTest, DuplicateAndMissingNames) {
  ParameterStore ps;
  ps.add("w", 1, 2, std::vector<double>{1.0, 2.0});
  EXPECT_THROW(ps.add("w", 1, 2, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(ps.slice("nope"), std::out_of_range);
  EXPECT_THROW(ps.add("v", 2, 2, std::vector<double>{1.0}), std::invalid_argument);
}

class NetGradient : public ::testing::TestWithParam<std::tuple<bool, bool, int>> {};

TEST_P(NetGradient, MatchesFiniteDifferences) {
  const auto [two_stage, stage1_private, blocks] = GetParam();
  PolicyNetwork net(small_config(two_stage, stage1_private, blocks), 17 + blocks);
  Rng rng(23);
  // Larger init so that the attention and tanh layers are not near-linear.
  for (auto& x : net.params().data()) x += 0.3 * rng.normal();
  const auto window = randn(rng, 8 * 4);
  const std::vector<double> priv{0.6, 0.1, 0.5};
  const Coeffs k{rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  tape_grad(net, window, priv, k);
  const std::vector<double> analytic = net.params().grad();
  const double h = 1e-5;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    double& x = net.params().data()[i];
    const double x0 = x;
    x = x0 + h;
    const double up = plain_loss(net, window, priv, k);
    x = x0 - h;
    const double dn = plain_loss(net, window, priv, k);
    x = x0;
    const double numeric = (up - dn) / (2 * h);
    ASSERT_LE(std::abs(analytic[i] - numeric), 1e-4 * std::max(1.0, std::abs(numeric))) << "param " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(Configs, NetGradient,
                         ::testing::Values(std::make_tuple(true, false, 1), std::make_tuple(false, true, 1),
                                           std::make_tuple(true, false, 2)));

TEST(Network, TapeAndPlainForwardAgree) {
  PolicyNetwork net(small_config(true, false), 3);
  Rng rng(4);
  const auto window = randn(rng, 32);
  const std::vector<double> priv{1.0, 0.0, 0.9};
  ad::Tape t;
  const ad::Var rep = net.encode(t, window);
  const auto plain_rep = net.encode(window);
  for (std::size_t i = 0; i < plain_rep.size(); ++i) EXPECT_EQ(t.value(rep)[i], plain_rep[i]);
  const auto p = net.actor(t, 2, rep, priv);
  const auto q = net.actor_head(2, plain_rep, priv);
  EXPECT_EQ(t.scalar(p.mean), q.mean);
  EXPECT_EQ(t.scalar(p.scale), q.scale);
}

TEST(Network, DeterministicInitAndForward) {
  PolicyNetwork a(small_config(true, false), 9);
  PolicyNetwork b(small_config(true, false), 9);
  PolicyNetwork c(small_config(true, false), 10);
  EXPECT_EQ(a.params().data(), b.params().data());
  EXPECT_NE(a.params().data(), c.params().data());
  Rng rng(1);
  const auto w = randn(rng, 32);
  EXPECT_EQ(a.encode(w), a.encode(w));
}

TEST(Network, ScaleHasFloor) {
  PolicyNetwork net(small_config(true, false), 5);
  for (auto& x : net.params().values("actor1.w2")) x = -1e3;
  for (auto& x : net.params().values("actor1.b2")) x = -1e3;
  Rng rng(2);
  const auto rep = net.encode(randn(rng, 32));
  const auto p = net.actor_head(1, rep);
  EXPECT_GE(p.scale, net.config().head.sigma_min);
  EXPECT_GT(p.scale, 0.0);
}

TEST(Network, InitialScaleAndSmallMean) {
  PolicyNetwork net(small_config(true, false), 6);
  Rng rng(3);
  const auto rep = net.encode(randn(rng, 32));
  const auto p = net.actor_head(1, rep);
  EXPECT_NEAR(p.scale, 1.0, 0.2);
  EXPECT_LT(std::abs(p.mean), 0.2);
}

TEST(Network, OrderOfTimeStepsMatters) {
  PolicyNetwork net(small_config(true, false), 7);
  Rng rng(8);
  const auto w = randn(rng, 32);
  auto rev = w;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) std::swap(rev[static_cast<std::size_t>(r * 4 + c)], rev[static_cast<std::size_t>((7 - r) * 4 + c)]);
  }
  const auto a = net.encode(w);
  const auto b = net.encode(rev);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Network, SharedEncoderProperty) {
  PolicyNetwork net(small_config(true, false), 11);
  Rng rng(12);
  const auto w = randn(rng, 32);
  const std::vector<double> priv{0.5, 0.0, 0.5};
  // Gradient of a pure stage-2 head loss.
  net.params().zero_grad();
  ad::Tape t;
  const ad::Var rep = net.encode(t, w);
  const auto p2 = net.actor(t, 2, rep, priv);
  t.seed(p2.mean, 1.0);
  t.backward();
  bool encoder_touched = false;
  for (const auto& s : net.params().slices()) {
    const auto g = net.params().grads(s.name);
    double norm = 0.0;
    for (double x : g) norm += x * x;
    if (s.name.rfind("actor1.", 0) == 0 || s.name.rfind("critic", 0) == 0) EXPECT_EQ(norm, 0.0) << s.name;
    if (s.name.rfind("enc", 0) == 0 && norm > 0.0) encoder_touched = true;
  }
  EXPECT_TRUE(encoder_touched);
  // A step along that gradient moves the stage-1 output through the encoder.
  const auto before = net.actor_head(1, net.encode(w));
  for (std::size_t i = 0; i < net.params().size(); ++i) net.params().data()[i] += 0.1 * net.params().grad()[i];
  const auto after = net.actor_head(1, net.encode(w));
  EXPECT_NE(before.mean, after.mean);
}

TEST(Network, PrivateStateChecks) {
  PolicyNetwork net(small_config(true, false), 13);
  Rng rng(14);
  const auto rep = net.encode(randn(rng, 32));
  const std::vector<double> priv{0.5, 0.0, 0.5};
  EXPECT_THROW(net.actor_head(1, rep, priv), std::invalid_argument);
  EXPECT_THROW(net.actor_head(2, rep), std::invalid_argument);
  EXPECT_THROW(net.critic_head(1, rep, priv), std::invalid_argument);
  EXPECT_THROW(net.encode(std::vector<double>(31, 0.0)), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  PolicyNetwork net(small_config(true, false), 15);
  Rng rng(16);
  for (auto& x : net.params().data()) x += 1e-3 * rng.normal();
  const auto dir = tu::temp_dir("ckpt");
  const auto path = dir / "c.json";
  save_checkpoint(path, net, nlohmann::json{{"note", "x"}});
  const LoadedCheckpoint loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.net.params().data(), net.params().data());
  EXPECT_EQ(loaded.net.seed(), 15u);
  EXPECT_EQ(loaded.extra.at("note"), "x");
  EXPECT_EQ(checkpoint_text(loaded.net, loaded.extra), checkpoint_text(net, nlohmann::json{{"note", "x"}}));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto dir = tu::temp_dir("ckpt_bad");
  {
    std::ofstream(dir / "a.json") << "{\"format\": \"something-else\"}";
    std::ofstream(dir / "b.json") << "not json";
  }
  EXPECT_ANY_THROW(load_checkpoint(dir / "a.json"));
  EXPECT_ANY_THROW(load_checkpoint(dir / "b.json"));
  EXPECT_ANY_THROW(load_checkpoint(dir / "missing.json"));
  std::filesystem::remove_all(dir);
}
