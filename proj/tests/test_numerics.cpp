#include <doctest.h>
#include <omp.h>

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cacl/numerics/adam.hpp"
#include "cacl/numerics/kernels.hpp"
#include "cacl/numerics/layers.hpp"
#include "cacl/numerics/ops.hpp"
#include "cacl/numerics/serialize.hpp"
#include "support/gradcheck.hpp"

using namespace cacl;
using cacl::testing::gradcheck;
using cacl::testing::random_tensor;

namespace {

// Literal zero-padded 3x3 convolution, x [B x C x H x W].
std::vector<double> conv_oracle(const Tensor& x, const Tensor& k, const Tensor& b) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = k.dim(0);
  std::vector<double> out(B * F * H * W, 0.0);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double acc = b[f];
          for (std::size_t c = 0; c < C; ++c)
            for (int di = -1; di <= 1; ++di)
              for (int dj = -1; dj <= 1; ++dj) {
                const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
                if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W))
                  continue;
                acc += x[((n * C + c) * H + ii) * W + jj] *
                       k[((f * C + c) * 3 + (di + 1)) * 3 + (dj + 1)];
              }
          out[((n * F + f) * H + i) * W + j] = acc;
        }
  return out;
}

double top_singular_value(const Tensor& w) {
  Eigen::MatrixXd m(w.dim(0), w.dim(1));
  for (std::size_t r = 0; r < w.dim(0); ++r)
    for (std::size_t c = 0; c < w.dim(1); ++c) m(r, c) = w.at(r, c);
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace

TEST_CASE("tape rejects non-scalar losses and reuse") {
  Tensor x = Tensor::parameter({3}, {1, 2, 3});
  GradTape tape;
  Tensor y = square(x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  Tensor s = sum(y);
  tape.backward(s);
  CHECK(x.grad() == std::vector<double>{2, 4, 6});
  CHECK_THROWS_AS(tape.backward(s), std::logic_error);
}

TEST_CASE("ops without a tape build no graph") {
  Tensor x = Tensor::parameter({2}, {1, 2});
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.data()[1] == 4.0);
}

TEST_CASE("linear matches a hand product") {
  const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor w = Tensor::matrix(2, 3, {1, 0, -1, 0.5, 0.5, 0.5});
  const Tensor b = Tensor::vector({0.1, -0.1});
  const Tensor y = linear(x, w, b);
  CHECK(y.at(0, 0) == doctest::Approx(-2 + 0.1));
  CHECK(y.at(0, 1) == doctest::Approx(3 - 0.1));
  CHECK(y.at(1, 0) == doctest::Approx(-2 + 0.1));
  CHECK(y.at(1, 1) == doctest::Approx(7.5 - 0.1));
}

TEST_CASE("conv2d equals the literal loop") {
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 5, 4}, rng, -1, 1, false);
  const Tensor k = random_tensor({4, 3, 3, 3}, rng, -1, 1, false);
  const Tensor b = random_tensor({4}, rng, -1, 1, false);
  const Tensor y = conv2d(x, k, b);
  const auto want = conv_oracle(x, k, b);
  REQUIRE(y.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(y[i] - want[i]) < 1e-12);
  // Unbatched input is the batch-of-one case.
  const Tensor one = conv2d(reshape(slice_last(reshape(x, {2, 60}), 0, 60), {2, 3, 5, 4}), k, b);
  CHECK(one.data()[0] == y.data()[0]);
}

TEST_CASE("parallel kernels agree bitwise with the serial references") {
  Rng rng(11);
  const std::size_t m = 70, n = 45, k = 33;
  std::vector<double> a(m * k), bnt(n * k), bnn(k * n), atn(k * m), bias(n);
  for (auto* v : {&a, &bnt, &bnn, &atn, &bias})
    for (double& e : *v) e = rng.uniform(-1, 1);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  std::vector<double> p(m * n), s(m * n);
  kernels::gemm_nt(a, bnt, bias, m, n, k, p);
  kernels::serial::gemm_nt(a, bnt, bias, m, n, k, s);
  CHECK(p == s);
  std::fill(p.begin(), p.end(), 0.5);
  std::fill(s.begin(), s.end(), 0.5);
  kernels::gemm_nn_acc(a, bnn, m, n, k, p);
  kernels::serial::gemm_nn_acc(a, bnn, m, n, k, s);
  CHECK(p == s);
  kernels::gemm_tn_acc(atn, bnn, m, n, k, p);
  kernels::serial::gemm_tn_acc(atn, bnn, m, n, k, s);
  CHECK(p == s);

  const Tensor x = random_tensor({3, 8, 9, 9}, rng, -1, 1, false);
  const Tensor kk = random_tensor({16, 8, 3, 3}, rng, -1, 1, false);
  const Tensor bb = random_tensor({16}, rng, -1, 1, false);
  const Tensor y4 = conv2d(x, kk, bb);
  omp_set_num_threads(1);
  const Tensor y1 = conv2d(x, kk, bb);
  CHECK(std::equal(y4.data().begin(), y4.data().end(), y1.data().begin()));
  std::vector<double> direct(y1.size());
  kernels::serial::conv2d3x3_direct(x.data(), kk.data(), bb.data(), 3, 8, 16, 9, 9, direct);
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(std::abs(direct[i] - y1[i]) < 1e-12);
  omp_set_num_threads(saved);
}

TEST_CASE("elementwise and row ops have correct gradients") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = random_tensor({4, 5}, rng);
    Tensor y = random_tensor({4, 5}, rng, 0.2, 2.0);
    const std::vector<std::size_t> idx{0, 4, 2, 2};
    const std::vector<std::size_t> rows{3, 0, 3};
    auto r = gradcheck(
        [&] {
          Tensor t = add(mul(sigmoid(x), tanh(y)), scale(exp(scale(x, 0.5)), 0.3));
          t = add(t, log(y));
          t = sub(t, square(abs(x)));
          Tensor sm = softmax_rows(concat({t, x}));
          Tensor ls = log_softmax_rows(add_scalar(y, 0.1));
          Tensor n = l2_normalize_rows(y);
          Tensor rs = row_sum(mul(n, x));
          Tensor g = gather_rows(concat_rows({t, relu(x)}), rows);
          return add(add(add(sum(mul(sm, sm)), mean(pick(ls, idx))), sum(mul(rs, rs))),
                     add(mse(x, y), sum(square(g))));
        },
        {x, y});
    CHECK_MESSAGE(r.failures == 0, r.first_failure);
  }
}

TEST_CASE("layer gradients match finite differences") {
  Rng rng(17);
  SUBCASE("linear") {
    for (int trial = 0; trial < 5; ++trial) {
      Tensor x = random_tensor({3, 6}, rng);
      Dense d = Dense::create(6, 4, rng);
      d.bias = random_tensor({4}, rng);
      auto r = gradcheck([&] { return sum(square(d(x))); }, {x, d.weight, d.bias});
      CHECK_MESSAGE(r.failures == 0, r.first_failure);
    }
  }
  SUBCASE("conv2d") {
    for (int trial = 0; trial < 3; ++trial) {
      Tensor x = random_tensor({2, 2, 4, 3}, rng);
      Conv3x3 c = Conv3x3::create(2, 3, rng);
      c.bias = random_tensor({3}, rng);
      auto r = gradcheck([&] { return sum(square(c(x))); }, {x, c.kernels, c.bias});
      CHECK_MESSAGE(r.failures == 0, r.first_failure);
    }
  }
  SUBCASE("gru") {
    for (int trial = 0; trial < 3; ++trial) {
      Tensor x = random_tensor({2, 5}, rng);
      Tensor h = random_tensor({2, 4}, rng);
      Gru g = Gru::create(5, 4, rng);
      g.b_ih = random_tensor({12}, rng);
      g.b_hh = random_tensor({12}, rng);
      auto r = gradcheck(
          [&] {
            Tensor h1 = gru_step(x, h, g);
            return sum(square(gru_step(x, h1, g)));
          },
          {x, h, g.w_ih, g.w_hh, g.b_ih, g.b_hh});
      CHECK_MESSAGE(r.failures == 0, r.first_failure);
    }
  }
  SUBCASE("spectral dense") {
    for (int trial = 0; trial < 3; ++trial) {
      Tensor x = random_tensor({3, 5}, rng);
      SpectralDense s = SpectralDense::create(5, 4, rng);
      s.update(3);
      auto r = gradcheck([&] { return sum(square(s(x))); }, {x, s.dense.weight, s.dense.bias});
      CHECK_MESSAGE(r.failures == 0, r.first_failure);
    }
  }
}

TEST_CASE("gru_step follows the gate equations") {
  Rng rng(2);
  Gru g = Gru::create(2, 1, rng);
  const Tensor x = Tensor::matrix(1, 2, {0.3, -0.7});
  const Tensor h = Tensor::matrix(1, 1, {0.4});
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto gate = [&](std::size_t row) {
    return g.w_ih[row * 2] * 0.3 + g.w_ih[row * 2 + 1] * -0.7 + g.b_ih[row];
  };
  const double r = sig(gate(0) + g.w_hh[0] * 0.4 + g.b_hh[0]);
  const double z = sig(gate(1) + g.w_hh[1] * 0.4 + g.b_hh[1]);
  const double n = std::tanh(gate(2) + r * (g.w_hh[2] * 0.4 + g.b_hh[2]));
  CHECK(gru_step(x, h, g)[0] == doctest::Approx((1 - z) * n + z * 0.4).epsilon(1e-12));
}

TEST_CASE("spectral normalization converges to unit top singular value") {
  Rng rng(23);
  // Random square matrices occasionally have sigma_2 / sigma_1 close to 1,
  // which slows power iteration, so convergence is checked with a long run.
  double worst = 0.0;
  int close_at_50 = 0;
  for (int trial = 0; trial < 100; ++trial) {
    SpectralDense s = SpectralDense::create(32, 32, rng);
    SpectralState fresh = s.state;
    fresh.u = s.state.u.clone();
    s.update(999);
    const Tensor w = spectral_normalize(s.dense.weight, s.state, 1);
    worst = std::max(worst, std::abs(top_singular_value(w) - 1.0));
    const Tensor w50 = spectral_normalize(s.dense.weight, fresh, 50);
    close_at_50 += std::abs(top_singular_value(w50) - 1.0) < 1e-3 ? 1 : 0;
  }
  CHECK(worst < 1e-3);
  CHECK(close_at_50 >= 85);
  SpectralState st = SpectralState::create(4, rng);
  CHECK_THROWS(spectral_normalize(Tensor({4, 4}, 1.0), st, 0));
}

TEST_CASE("spectral normalization is scale invariant") {
  Rng rng(4);
  const Tensor w = random_tensor({6, 5}, rng, -1, 1, false);
  const Tensor w3 = scale(w, 3.0);
  SpectralState a = SpectralState::create(6, rng);
  SpectralState b = a;
  b.u = a.u.clone();
  const Tensor n1 = spectral_normalize(w, a, 500);
  const Tensor n3 = spectral_normalize(w3, b, 500);
  for (std::size_t i = 0; i < n1.size(); ++i) CHECK(n1[i] == doctest::Approx(n3[i]).epsilon(1e-10));
}

TEST_CASE("adam matches a hand update") {
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g{1.0, 0.5};
  AdamState st;
  AdamConfig cfg;
  adam_step(p, g, st, cfg);
  CHECK(p[0] == doctest::Approx(1.0 - 3e-4 / (1.0 + 1e-3)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-2.0 - 3e-4 * 0.5 / (0.5 + 1e-3)).epsilon(1e-12));
  // Second step against an explicit recurrence.
  const std::vector<double> g2{-0.2, 0.1};
  double m = 0.9 * 0.1 + 0.1 * -0.2;
  double v = 0.999 * 0.001 + 0.001 * 0.04;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double want = p[0] - 3e-4 * mh / (std::sqrt(vh) + 1e-3);
  adam_step(p, g2, st, cfg);
  CHECK(p[0] == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(adam_step(p, std::vector<double>{1.0}, st, cfg), std::invalid_argument);
}

TEST_CASE("parameter files round-trip bit-exactly") {
  Rng rng(8);
  Dense d = Dense::create(3, 5, rng);
  ParameterSet ps = d.parameters();
  const auto dir = std::filesystem::temp_directory_path() / "cacl_serialize_test";
  std::filesystem::remove_all(dir);
  save_parameters(dir, ps, {{"method", "iac"}});
  Dense e = Dense::create(3, 5, rng);
  const auto meta = load_parameters(dir, e.parameters());
  CHECK(meta["method"] == "iac");
  for (std::size_t i = 0; i < d.weight.size(); ++i) {
    CHECK(std::bit_cast<std::uint64_t>(d.weight[i]) == std::bit_cast<std::uint64_t>(e.weight[i]));
  }
  Dense wrong = Dense::create(4, 5, rng);
  CHECK_THROWS(load_parameters(dir, wrong.parameters()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("rng is deterministic and its helpers are in range") {
  Rng a(99), b(99);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  int counts[3] = {0, 0, 0};
  const double w[3] = {1.0, 2.0, 1.0};
  for (int i = 0; i < 40000; ++i) counts[a.categorical(w)]++;
  CHECK(counts[1] / 40000.0 == doctest::Approx(0.5).epsilon(0.03));
  for (int i = 0; i < 1000; ++i) CHECK(a.below(7) < 7);
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}
