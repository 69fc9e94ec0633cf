#include <cstring>
#include <filesystem>
#include <numbers>

#include "artifact/ddpo.hpp"
#include "artifact/diffusion.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace artifact;

namespace {

Eigen::MatrixXd normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = standard_normal(rng);
  return m;
}

const DenoiserTopology kSmall{15, 16, 32, 2};

}  // namespace

TEST_CASE("noise schedules") {
  const NoiseSchedule s = NoiseSchedule::scaled_linear(50);
  CHECK(s.steps() == 50);
  CHECK(s.beta(1) == doctest::Approx(0.002).epsilon(1e-12));
  CHECK(s.beta(50) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(50) < 1e-3);
  CHECK(s.sigma(10) * s.sigma(10) == doctest::Approx(s.beta(10)));
  double ab = 1;
  for (int t = 1; t <= 50; ++t) ab *= 1 - s.beta(t);
  CHECK(s.alpha_bar(50) == doctest::Approx(ab).epsilon(1e-12));

  const NoiseSchedule lin = NoiseSchedule::linear(1000, 1e-4, 0.02);
  CHECK(lin.beta(1) == 1e-4);
  CHECK(lin.beta(1000) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK_THROWS_AS(s.beta(0), DomainError);
  CHECK_THROWS_AS(s.beta(51), DomainError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.2, 0.1), DomainError);
  CHECK_THROWS_AS(NoiseSchedule::linear(0, 0.1, 0.2), DomainError);
}

TEST_CASE("forward noise") {
  Rng rng(2);
  const Eigen::VectorXd x0 = normal_matrix(rng, 15, 1);
  const NoiseSchedule s = NoiseSchedule::scaled_linear(50);
  CHECK(forward_noise(x0, 7, Eigen::VectorXd::Zero(15), s) == std::sqrt(s.alpha_bar(7)) * x0);

  const NoiseSchedule tiny = NoiseSchedule::linear(10, 1e-10, 1e-9);
  CHECK((forward_noise(x0, 1, normal_matrix(rng, 15, 1), tiny) - x0).cwiseAbs().maxCoeff() < 1e-4);

  const int t = 20;
  const int draws = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(15), sum_sq = Eigen::VectorXd::Zero(15);
  for (int k = 0; k < draws; ++k) {
    const Eigen::VectorXd xt = forward_noise(x0, t, normal_matrix(rng, 15, 1), s);
    sum += xt;
    sum_sq += xt.cwiseAbs2();
  }
  const Eigen::VectorXd mean = sum / draws;
  const Eigen::VectorXd var = sum_sq / draws - mean.cwiseAbs2();
  for (Eigen::Index i = 0; i < 15; ++i) CHECK(var[i] == doctest::Approx(1 - s.alpha_bar(t)).epsilon(0.05));
  CHECK_THROWS_AS(forward_noise(x0, 0, x0, s), DomainError);
}

TEST_CASE("denoising loss gradient matches finite differences") {
  const NoiseSchedule s = NoiseSchedule::scaled_linear(50);
  Rng rng(3);
  Denoiser model(kSmall, rng);
  const Eigen::MatrixXd x0 = normal_matrix(rng, 15, 6), eps = normal_matrix(rng, 15, 6);
  const int t[] = {1, 2, 10, 25, 40, 50};
  const int c[] = {0, 1, 0, 1, 1, 0};
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.parameter_count());
  const double loss = denoising_loss(model, x0, t, c, eps, s, &grad);
  CHECK(loss == denoising_loss(model, x0, t, c, eps, s));
  const auto f = [&](const Eigen::VectorXd& theta) {
    Denoiser probe(kSmall);
    probe.set_parameters(theta);
    return denoising_loss(probe, x0, t, c, eps, s);
  };
  for (int k = 0; k < 10; ++k) {
    const auto i = static_cast<Eigen::Index>(uniform_below(rng, model.parameter_count()));
    CHECK(gradcheck::relative_error(grad[i], gradcheck::central_difference(f, model.parameters(), i)) < 1e-4);
  }
}

TEST_CASE("Adam descends a quadratic") {
  Adam adam(2, 0.1);
  Eigen::VectorXd p(2);
  p << 3, -2;
  for (int i = 0; i < 500; ++i) adam.step(p, 2 * p);
  CHECK(p.norm() < 1e-2);
  CHECK(adam.steps_taken() == 500);
}

TEST_CASE("denoiser training") {
  const SceneConfig cfg;
  const NoiseSchedule s = NoiseSchedule::scaled_linear(50);
  const ExampleSampler data = scene_example_sampler(SceneMix::default_mix(), cfg);

  SUBCASE("zero learning rate keeps the weights") {
    Rng init(5);
    const Denoiser model(kSmall, init);
    Rng rng(6);
    TrainResult r = train_denoiser(model, data, TrainConfig{20, 16, 0.0}, s, rng);
    CHECK(r.model.parameters() == model.parameters());
    CHECK(r.loss_curve.size() == 20);
  }
  SUBCASE("loss falls on the scene mixture") {
    Rng rng(7);
    TrainResult r = train_denoiser(Denoiser(DenoiserTopology{}, rng), data, TrainConfig{2000, 64, 1e-3}, s, rng);
    const auto window = [&](std::size_t end) {
      double total = 0;
      for (std::size_t i = end - 50; i < end; ++i) total += r.loss_curve[i];
      return total / 50;
    };
    CHECK(window(2000) < window(100));
  }
  SUBCASE("invalid settings") {
    Rng rng(1);
    CHECK_THROWS_AS(train_denoiser(Denoiser(kSmall), data, TrainConfig{1, 0, 1e-3}, s, rng), DomainError);
    CHECK_THROWS_AS(train_denoiser(Denoiser(kSmall), data, TrainConfig{1, 4, -1.0}, s, rng), DomainError);
  }
}

TEST_CASE("pretraining on clean scenes yields mostly clean samples") {
  SceneConfig cfg;
  const NoiseSchedule s = NoiseSchedule::scaled_linear(50);
  const ExampleSampler data = scene_example_sampler(SceneMix::parse("clean=1"), cfg);
  Rng rng(12);
  TrainResult r = train_denoiser(Denoiser(DenoiserTopology{}, rng), data, TrainConfig{6000, 128, 1e-3}, s, rng);
  const SceneCodec codec(cfg);
  int clean = 0;
  const int n = 256;
  std::vector<Rng> rngs;
  std::vector<int> conditions;
  for (int i = 0; i < n; ++i) {
    rngs.push_back(make_stream(99, static_cast<std::uint64_t>(i)));
    conditions.push_back(i % 2);
  }
  for (const auto& traj : sample_batch(r.model, conditions, rngs, s)) {
    clean += classify_scene(codec.decode(traj.final_state()), cfg).is_no_artifacts();
  }
  MESSAGE("clean fraction " << double(clean) / n);
  CHECK(double(clean) / n >= 0.8);
}

TEST_CASE("sampled trajectories") {
  const NoiseSchedule s = NoiseSchedule::scaled_linear(50);
  Rng init(9);
  const Denoiser model(kSmall, init);
  Rng a(21), b(21);
  const Trajectory ta = sample(model, 1, a, s), tb = sample(model, 1, b, s);
  CHECK(ta.states == tb.states);
  CHECK(ta.log_probs == tb.log_probs);
  CHECK(ta.states.cols() == 51);
  CHECK(ta.condition == 1);
  for (int t = 1; t <= 50; ++t) {
    const double sigma = ta.sigmas[t];
    const Eigen::VectorXd diff = ta.states.col(t - 1) - ta.means.col(t);
    const double expected =
        -7.5 * std::log(2 * std::numbers::pi * sigma * sigma) - diff.squaredNorm() / (2 * sigma * sigma);
    CHECK(std::abs(ta.log_probs[t] - expected) < 1e-9);
  }
  const Eigen::MatrixXd x_t = ta.states.col(30), x_prev = ta.states.col(29);
  const int c[] = {1};
  CHECK(step_log_probs(model, x_t, x_prev, 30, c, s)[0] == ta.log_probs[30]);
}

TEST_CASE("step log-probability") {
  const NoiseSchedule s = NoiseSchedule::scaled_linear(50);
  SUBCASE("peak density at the mean") {
    Rng rng(4);
    const Denoiser model(kSmall, rng);
    const Eigen::MatrixXd x_t = normal_matrix(rng, 15, 1);
    const int t[] = {12}, c[] = {0};
    const Eigen::VectorXd mean = reverse_mean(x_t, model.forward(x_t, t, c), 12, s).col(0);
    const StepLogProb lp = step_logprob_grad(model, x_t.col(0), mean, 12, 0, s);
    CHECK(lp.log_prob == doctest::Approx(-7.5 * std::log(2 * std::numbers::pi * s.beta(12))).epsilon(1e-12));
  }
  SUBCASE("gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(100 + seed);
      const Denoiser model(kSmall, rng);
      const int t = 1 + static_cast<int>(uniform_below(rng, 50));
      const Eigen::VectorXd x_t = normal_matrix(rng, 15, 1);
      const Eigen::VectorXd x_prev = x_t + 0.3 * normal_matrix(rng, 15, 1);
      const StepLogProb lp = step_logprob_grad(model, x_t, x_prev, t, 1, s);
      const auto f = [&](const Eigen::VectorXd& theta) {
        Denoiser probe(kSmall);
        probe.set_parameters(theta);
        return step_logprob_grad(probe, x_t, x_prev, t, 1, s).log_prob;
      };
      for (int k = 0; k < 10; ++k) {
        const auto i = static_cast<Eigen::Index>(uniform_below(rng, model.parameter_count()));
        CHECK(gradcheck::relative_error(lp.gradient[i], gradcheck::central_difference(f, model.parameters(), i)) <
              1e-4);
      }
    }
  }
  SUBCASE("constant-output denoiser: bias gradient is the chained Gaussian score") {
    Denoiser model(kSmall);
    Rng rng(8);
    const Eigen::VectorXd bias = normal_matrix(rng, 15, 1);
    model.b3() = bias;
    const int t = 17;
    const Eigen::VectorXd x_t = normal_matrix(rng, 15, 1), x_prev = normal_matrix(rng, 15, 1);
    const StepLogProb lp = step_logprob_grad(model, x_t, x_prev, t, 0, s);
    const double chain = -s.beta(t) / (std::sqrt(1 - s.alpha_bar(t)) * std::sqrt(s.alpha(t)));
    const Eigen::VectorXd mu = (x_t - s.beta(t) / std::sqrt(1 - s.alpha_bar(t)) * bias) / std::sqrt(s.alpha(t));
    const Eigen::VectorXd expected = chain * (x_prev - mu) / s.beta(t);
    const Eigen::VectorXd got = lp.gradient.tail(15);
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("checkpoints") {
  Rng rng(31);
  const Denoiser model(kSmall, rng);
  const std::string bytes = encode_checkpoint(model);
  CHECK(bytes.size() == 8 + 4 * 5 + 8 + 8 * static_cast<std::size_t>(model.parameter_count()));
  CHECK(std::memcmp(bytes.data(), "ARTDENS", 8) == 0);
  const Denoiser back = decode_checkpoint(bytes);
  CHECK(back.topology() == model.topology());
  CHECK(back.parameters() == model.parameters());
  CHECK(encode_checkpoint(back) == bytes);

  const auto path = (std::filesystem::temp_directory_path() / "artifact_ckpt_test.bin").string();
  save_checkpoint(model, path);
  CHECK(load_checkpoint(path).parameters() == model.parameters());
  std::filesystem::remove(path);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), ParseError);
  bad = bytes;
  bad[8] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad), VersionError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), ParseError);
  bad = bytes;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(bad.data() + bad.size() - 8, &nan, 8);
  CHECK_THROWS_AS(decode_checkpoint(bad), ValidationError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), Error);
}
