#include "helpers.hpp"
#include "xmhash/hash_model.hpp"

using namespace xmh;

namespace {

double loss_by_loops(const std::vector<Matrix>& f, const Matrix& b, double g1, double g2, bool diag) {
  const Index n = b.rows();
  const Index l = b.cols();
  double fid = 0.0;
  double cross = 0.0;
  double indep = 0.0;
  for (std::size_t m = 0; m < f.size(); ++m) {
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < l; ++j) fid += (f[m](i, j) - b(i, j)) * (f[m](i, j) - b(i, j));
    for (std::size_t t = 0; t < f.size(); ++t) {
      if (m != t)
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < l; ++j) cross += f[m](i, j) * f[t](i, j);
      if (m == t && !diag) continue;
      for (Index p = 0; p < l; ++p)
        for (Index q = 0; q < l; ++q) {
          double g = 0.0;
          for (Index i = 0; i < n; ++i) g += f[m](i, p) * f[t](i, q);
          if (p == q) g -= static_cast<double>(n);
          indep += g * g;
        }
    }
  }
  return 0.5 * fid - g1 * cross + g2 * indep;
}

double fidelity(const HashModel& model, const Matrix& x, const Matrix& b) {
  return 0.5 * (model.forward(x) - b).squaredNorm();
}

double independence_residual(const std::vector<HashModel>& models, const MultiModalDataset& d) {
  double r = 0.0;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const Matrix f = models[m].forward(d.modality(m));
    r += (f.transpose() * f - static_cast<double>(f.rows()) * Matrix::Identity(f.cols(), f.cols())).norm();
  }
  return r;
}

void check_backprop(const HashModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix x = testutil::random_matrix(6, model.input_dim(), rng);
  const Matrix d_out = testutil::random_matrix(6, model.output_dim(), rng);
  const Vector theta = model.parameters();
  HashModel probe = model;
  auto f = [&](const Matrix& t) {
    probe.set_parameters(t);
    return probe.forward(x).cwiseProduct(d_out).sum();
  };
  const Matrix numeric = testutil::numeric_gradient(f, Matrix(theta));
  const Vector analytic = model.backprop(x, d_out);
  CHECK(testutil::relative_error(Matrix(analytic), numeric) < 1e-3);
}

}  // namespace

TEST_SUITE("hash_model") {
  TEST_CASE("outputs equal to B isolate the independence term") {
    std::mt19937_64 rng(1);
    const Matrix b = testutil::random_binary(6, 3, rng);
    const double expected = 100.0 * (b.transpose() * b - 6.0 * Matrix::Identity(3, 3)).squaredNorm();
    CHECK(stage2_loss({b}, b, 100.0, 100.0) == doctest::Approx(expected).epsilon(1e-12));
    Matrix h(4, 2);
    h << 1, 1, 1, -1, -1, 1, -1, -1;
    CHECK(stage2_loss({h}, h, 100.0, 100.0) == 0.0);
  }

  TEST_CASE("zero outputs without regularisers give M N L / 2") {
    std::mt19937_64 rng(2);
    const Matrix b = testutil::random_binary(5, 4, rng);
    const Matrix z = Matrix::Zero(5, 4);
    CHECK(stage2_loss({z, z, z}, b, 0.0, 0.0) == doctest::Approx(3.0 * 5.0 * 4.0 / 2.0));
  }

  TEST_CASE("loss matches a naive loop evaluation") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 5; ++rep) {
      const Matrix b = testutil::random_binary(4, 2, rng);
      const std::vector<Matrix> f{testutil::random_matrix(4, 2, rng), testutil::random_matrix(4, 2, rng)};
      for (bool diag : {true, false}) {
        const double want = loss_by_loops(f, b, 1.7, 0.3, diag);
        CHECK(std::abs(stage2_loss(f, b, 1.7, 0.3, diag) - want) < 1e-10 * std::max(1.0, std::abs(want)));
      }
    }
  }

  TEST_CASE("output gradients match finite differences") {
    std::mt19937_64 rng(4);
    const Matrix b = testutil::random_binary(5, 3, rng);
    std::vector<Matrix> f{testutil::random_matrix(5, 3, rng), testutil::random_matrix(5, 3, rng),
                          testutil::random_matrix(5, 3, rng)};
    for (bool diag : {true, false}) {
      const auto grads = stage2_output_gradients(f, b, 0.8, 0.2, diag);
      for (std::size_t m = 0; m < f.size(); ++m) {
        auto fn = [&](const Matrix& x) {
          auto g = f;
          g[m] = x;
          return stage2_loss(g, b, 0.8, 0.2, diag);
        };
        CHECK(testutil::relative_error(grads[m], testutil::numeric_gradient(fn, f[m])) < 1e-6);
      }
    }
  }

  TEST_CASE("loss shape errors") {
    const Matrix b = Matrix::Ones(3, 2);
    CHECK_THROWS_AS(stage2_loss({Matrix::Zero(3, 3)}, b, 1.0, 1.0), Error);
    CHECK_THROWS_AS(stage2_loss({Matrix::Zero(2, 2)}, b, 1.0, 1.0), Error);
  }

  TEST_CASE("backprop matches finite differences") {
    HashModel lin(Architecture::linear(), 4, 3, 5);
    std::mt19937_64 rng(5);
    lin.fit_input_scaling(testutil::random_matrix(20, 4, rng, 3.0));
    check_backprop(lin, 6);
    HashModel mlp(Architecture::mlp({7, 5}), 4, 3, 7);
    mlp.fit_input_scaling(testutil::random_matrix(20, 4, rng, 2.0));
    check_backprop(mlp, 8);
    CHECK(mlp.parameter_count() == 7 * 4 + 7 + 5 * 7 + 5 + 3 * 5 + 3);
  }

  TEST_CASE("linear model without regularisers reaches least squares") {
    std::mt19937_64 rng(9);
    const Matrix x = testutil::random_matrix(120, 5, rng, 2.0);
    const Matrix b = testutil::random_binary(120, 3, rng);
    Matrix design(120, 6);
    design << x, Matrix::Ones(120, 1);
    const Matrix coef = (design.transpose() * design).ldlt().solve(design.transpose() * b);
    const double optimum = 0.5 * (design * coef - b).squaredNorm();

    Stage2Config cfg;
    cfg.gamma1 = 0.0;
    cfg.gamma2 = 0.0;
    cfg.epochs = 200;
    cfg.batch_size = 32;
    cfg.seed = 3;
    const MultiModalDataset d({x});
    const auto res = train_hash_models(d, b, Architecture::linear(), cfg);
    CHECK(fidelity(res.models[0], x, b) <= 1.01 * optimum);
  }

  TEST_CASE("separable data: signs reproduce the codes") {
    std::mt19937_64 rng(10);
    const Matrix x = testutil::random_matrix(200, 6, rng);
    const Matrix w = testutil::random_matrix(6, 4, rng);
    const CodeMatrix b = sign_matrix(x * w);
    Stage2Config cfg;
    cfg.gamma1 = 0.0;
    cfg.gamma2 = 0.0;
    cfg.epochs = 100;
    cfg.seed = 4;
    const MultiModalDataset d({x});
    const auto res = train_hash_models(d, b, Architecture::linear(), cfg);
    const CodeMatrix got = encode(res.models[0], x);
    const double agree = static_cast<double>((got.array() == b.array()).count()) / static_cast<double>(b.size());
    CHECK(agree >= 0.95);
  }

  TEST_CASE("loss curve is non-increasing within 5 percent") {
    SynthesisSpec spec;
    spec.per_cluster = 40;
    const auto d = unit_variance_normalize(synthesize_clustered(spec));
    std::mt19937_64 rng(11);
    const CodeMatrix b = testutil::random_binary(d.instance_count(), 6, rng);
    Stage2Config cfg;
    cfg.epochs = 30;
    cfg.seed = 5;
    const auto res = train_hash_models(d, b, Architecture::linear(), cfg);
    REQUIRE(res.loss_curve.size() == 30);
    for (std::size_t e = 1; e < res.loss_curve.size(); ++e)
      CHECK(res.loss_curve[e] <= res.loss_curve[e - 1] + 0.05 * std::abs(res.loss_curve[e - 1]));
  }

  TEST_CASE("raising gamma2 lowers the independence residual") {
    SynthesisSpec spec;
    spec.per_cluster = 40;
    spec.spread = 0.5;
    spec.seed = 2;
    const auto d = unit_variance_normalize(synthesize_clustered(spec));
    std::mt19937_64 rng(12);
    const CodeMatrix b = testutil::random_binary(d.instance_count(), 6, rng);
    Stage2Config cfg;
    cfg.gamma1 = 0.0;
    cfg.epochs = 40;
    cfg.seed = 6;
    cfg.gamma2 = 0.0;
    const auto off = train_hash_models(d, b, Architecture::linear(), cfg);
    cfg.gamma2 = 100.0;
    const auto on = train_hash_models(d, b, Architecture::linear(), cfg);
    CHECK(independence_residual(on.models, d) < independence_residual(off.models, d));
  }

  TEST_CASE("training is deterministic and divergence is reported") {
    SynthesisSpec spec;
    const auto d = synthesize_clustered(spec);
    std::mt19937_64 rng(13);
    const CodeMatrix b = testutil::random_binary(d.instance_count(), 4, rng);
    Stage2Config cfg;
    cfg.epochs = 5;
    cfg.seed = 9;
    const auto a = train_hash_models(d, b, Architecture::mlp({8}), cfg);
    const auto c = train_hash_models(d, b, Architecture::mlp({8}), cfg);
    for (std::size_t m = 0; m < 2; ++m) CHECK((a.models[m].parameters() - c.models[m].parameters()).norm() == 0.0);

    cfg.learning_rate = 1e6;
    cfg.momentum = 0.0;
    try {
      train_hash_models(d, b, Architecture::linear(), cfg);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("last finite epoch") != std::string::npos);
    }
    CHECK_THROWS_AS(train_hash_models(d, Matrix::Ones(3, 4), Architecture::linear(), Stage2Config{}), Error);
  }

  TEST_CASE("encode examples") {
    HashModel model(Architecture::linear(), 2, 2, 0);
    Vector theta(6);
    theta << 1, 0, 0, 1, 0, 0;
    model.set_parameters(theta);
    Matrix x(1, 2);
    x << 2, -3;
    const CodeMatrix code = encode(model, x);
    CHECK(code(0, 0) == 1.0);
    CHECK(code(0, 1) == -1.0);

    model.set_parameters(Vector::Zero(6));
    std::mt19937_64 rng(14);
    const Matrix many = testutil::random_matrix(10, 2, rng);
    CHECK((encode(model, many).array() == 1.0).all());

    HashModel mlp(Architecture::mlp({5}), 2, 3, 1);
    CHECK((encode(mlp, many).array() == encode(mlp, many).array()).all());
    CHECK(is_binary(encode(mlp, many)));
    CHECK_THROWS_AS(encode(mlp, Matrix::Zero(2, 3)), Error);
  }

  TEST_CASE("save and load round trip") {
    const auto dir = testutil::temp_dir("hash_model");
    HashModel mlp(Architecture::mlp({6, 4}), 3, 5, 2);
    std::mt19937_64 rng(15);
    const Matrix x = testutil::random_matrix(12, 3, rng, 4.0);
    mlp.fit_input_scaling(x);
    mlp.save(dir / "m.xmhm");
    const auto back = HashModel::load(dir / "m.xmhm");
    CHECK(back.architecture().kind == Architecture::Kind::Mlp);
    CHECK(back.output_dim() == 5);
    CHECK(testutil::relative_error(back.forward(x), mlp.forward(x)) < 1e-5);
    back.save(dir / "again.xmhm");
    CHECK(io::read_text(dir / "m.xmhm") == io::read_text(dir / "again.xmhm"));
    io::write_text(dir / "bad.xmhm", "nope");
    CHECK_THROWS_AS(HashModel::load(dir / "bad.xmhm"), Error);
  }

  TEST_CASE("architecture parsing") {
    CHECK(parse_architecture("linear", {}).kind == Architecture::Kind::Linear);
    CHECK(parse_architecture("mlp", {8}).hidden.size() == 1);
    CHECK_THROWS_AS(parse_architecture("mlp", {}), Error);
    CHECK_THROWS_AS(parse_architecture("cnn", {}), Error);
  }
}
