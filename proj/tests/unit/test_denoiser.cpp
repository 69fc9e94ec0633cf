#include "artifact/denoiser.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace artifact;

TEST_CASE("parameter layout") {
  const DenoiserTopology topo{15, 16, 128, 2};
  const Eigen::Index expected = 128 * 31 + 128 + 128 * 2 + 128 * 128 + 128 + 15 * 128 + 15;
  CHECK(Denoiser::parameter_count(topo) == expected);
  Denoiser model(topo);
  CHECK(model.parameter_count() == expected);
  CHECK(model.parameters().isZero());
  CHECK_THROWS_AS(Denoiser(DenoiserTopology{0, 16, 8, 1}), DomainError);
}

TEST_CASE("time embedding") {
  const Eigen::VectorXd e = time_embedding<double>(0, 16);
  CHECK(e.head(8).isZero());
  CHECK(e.tail(8).isOnes());
  const Eigen::VectorXd e7 = time_embedding<double>(7, 16);
  CHECK(e7[0] == std::sin(7.0));
  CHECK(e7[8] == std::cos(7.0));
  CHECK(time_embedding<double>(3, 5)[4] == 0.0);
}

TEST_CASE("forward shape, conditioning and float instantiation") {
  Rng rng(1);
  const DenoiserTopology topo{15, 16, 32, 2};
  Denoiser model(topo, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(15, 3);
  const int t[] = {1, 20, 50};
  const int c0[] = {0, 0, 0};
  const int c1[] = {1, 1, 1};
  const Eigen::MatrixXd out = model.forward(x, t, c0);
  CHECK(out.rows() == 15);
  CHECK(out.cols() == 3);
  CHECK(out != model.forward(x, t, c1));
  const int bad[] = {0, 2, 0};
  CHECK_THROWS_AS(model.forward(x, t, bad), DomainError);

  BasicDenoiser<float> single(topo);
  single.set_parameters(model.parameters().cast<float>());
  const Eigen::MatrixXf out_f = single.forward(x.cast<float>(), t, c0);
  CHECK((out_f.cast<double>() - out).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("backward matches finite differences of a weighted output") {
  const DenoiserTopology topo{15, 16, 24, 3};
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    Denoiser model(topo, rng);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(15, 4);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Random(15, 4);
    const int t[] = {1, 5, 30, 50};
    const int c[] = {0, 2, 2, 1};
    Denoiser::Cache cache;
    model.forward(x, t, c, &cache);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.parameter_count());
    model.backward(cache, w, grad);
    const auto f = [&](const Eigen::VectorXd& theta) {
      Denoiser probe(topo);
      probe.set_parameters(theta);
      return probe.forward(x, t, c).cwiseProduct(w).sum();
    };
    for (int k = 0; k < 20; ++k) {
      const auto i = static_cast<Eigen::Index>(uniform_below(rng, model.parameter_count()));
      const double numeric = gradcheck::central_difference(f, model.parameters(), i);
      CHECK(gradcheck::relative_error(grad[i], numeric) < 1e-5);
    }
  }
}
