#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "quadpose/canine.hpp"
#include "quadpose/shape.hpp"

#include <filesystem>
#include <random>

using namespace quadpose;

namespace {

std::vector<ShapeExemplar> corpus_from_models(const std::vector<DogModel>& dogs) {
  std::vector<ShapeExemplar> corpus;
  for (const auto& d : dogs) corpus.push_back({d.mesh, d.skeleton, d.neutral_pose});
  return corpus;
}

}  // namespace

TEST_CASE("two-exemplar corpus: one component, exact reconstruction") {
  const auto dogs = make_shape_corpus(2, 5);
  const ShapeModel model = build_shape_model(corpus_from_models(dogs));
  CHECK(model.rank() == 1);

  for (const auto& dog : dogs) {
    const VecX lengths = rest_bone_lengths(dog.skeleton).tail(model.length_block());
    const ShapePrediction pred = predict_shape(model, lengths, 1);
    const Scalar scale = dog.mesh.vertices.cwiseAbs().maxCoeff();
    CHECK((pred.mesh.vertices - dog.mesh.vertices).cwiseAbs().maxCoeff() < 1e-6 * scale);
    const VecX got = rest_bone_lengths(pred.skeleton).tail(model.length_block());
    CHECK((got - lengths).cwiseAbs().maxCoeff() < 1e-6 * lengths.maxCoeff());
  }
}

TEST_CASE("duplicated exemplar adds no rank") {
  auto dogs = make_shape_corpus(3, 6);
  auto corpus = corpus_from_models(dogs);
  const int base_rank = build_shape_model(corpus).rank();
  corpus.push_back(corpus.back());
  CHECK(build_shape_model(corpus).rank() == base_rank);
}

TEST_CASE("known 4-dim generative corpus concentrates variance in 4 components") {
  // the surrogate generator itself is a 5-parameter family; build a corpus
  // from exactly 4 varying parameters plus small noise
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
  std::vector<ShapeExemplar> corpus;
  for (int i = 0; i < 24; ++i) {
    DogProportions p;
    p.torso = 1.0 + 0.25 * u(rng);
    p.legs = 1.0 + 0.25 * u(rng);
    p.head = 1.0 + 0.2 * u(rng);
    p.width = 1.0 + 0.15 * u(rng);
    DogModel dog = make_dog(p);
    for (int v = 0; v < dog.mesh.vertex_count(); ++v)
      dog.mesh.vertices.row(v) +=
          Eigen::RowVector3d(u(rng), u(rng), u(rng)) * 0.5;  // noise, mm
    corpus.push_back({dog.mesh, dog.skeleton, dog.neutral_pose});
  }
  const ShapeModel model = build_shape_model(corpus);
  const Scalar total = model.variances.sum();
  const Scalar top4 = model.variances.head(4).sum();
  CHECK(top4 / total >= 0.95);
}

TEST_CASE("mean bone lengths give exactly zero coefficients") {
  const ShapeModel model = build_shape_model(corpus_from_models(make_shape_corpus(10, 7)));
  const VecX mean_lengths =
      model.mean.segment(model.vertex_block(), model.length_block());
  const ShapePrediction pred = predict_shape(model, mean_lengths, 4);
  CHECK(pred.coefficients.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predict_shape is idempotent and scales sensibly") {
  const ShapeModel model = build_shape_model(corpus_from_models(make_shape_corpus(10, 8)));
  const auto probe = make_dog({1.1, 0.9, 1.05, 0.95, 0.05});
  const VecX targets = rest_bone_lengths(probe.skeleton).tail(model.length_block());

  const ShapePrediction first = predict_shape(model, targets, 4);
  const VecX realized = rest_bone_lengths(first.skeleton).tail(model.length_block());
  const ShapePrediction second = predict_shape(model, realized, 4);
  CHECK((second.coefficients - first.coefficients).cwiseAbs().maxCoeff() < 1e-9);

  // doubled targets: residual is least-squares optimal against random probes
  const ShapePrediction doubled = predict_shape(model, 2.0 * targets, 4);
  const VecX doubled_realized = rest_bone_lengths(doubled.skeleton).tail(model.length_block());
  const Scalar residual = (doubled_realized - 2.0 * targets).squaredNorm();
  std::mt19937_64 rng(81);
  std::normal_distribution<Scalar> g(0.0, 1.0);
  for (int probe_i = 0; probe_i < 200; ++probe_i) {
    VecX c = doubled.coefficients;
    for (int k = 0; k < c.size(); ++k) c[k] += 0.05 * g(rng) * (1.0 + std::abs(c[k]));
    // realized lengths are linear in the coefficients through the model
    VecX alt = model.mean.segment(model.vertex_block(), model.length_block());
    for (int k = 0; k < c.size(); ++k)
      alt += model.block_scales[1] * c[k] *
             model.components.row(k)
                 .segment(model.vertex_block(), model.length_block())
                 .transpose();
    CHECK(residual <= (alt - 2.0 * targets).squaredNorm() + 1e-9);
  }

  CHECK_THROWS_AS(predict_shape(model, VecX::Zero(model.length_block()), 4), ValidationError);
  CHECK_THROWS_AS(predict_shape(model, targets, model.rank() + 1), ValidationError);
}

TEST_CASE("leave-one-out bone lengths within 10%") {
  const auto dogs = make_shape_corpus(10, 42);
  for (size_t held = 0; held < dogs.size(); held += 3) {
    std::vector<ShapeExemplar> corpus;
    for (size_t i = 0; i < dogs.size(); ++i)
      if (i != held) corpus.push_back({dogs[i].mesh, dogs[i].skeleton, dogs[i].neutral_pose});
    const ShapeModel model = build_shape_model(corpus);
    const VecX truth = rest_bone_lengths(dogs[held].skeleton).tail(model.length_block());
    const ShapePrediction pred = predict_shape(model, truth, 4);
    const VecX got = rest_bone_lengths(pred.skeleton).tail(model.length_block());
    for (int b = 0; b < truth.size(); ++b)
      CHECK(std::abs(got[b] - truth[b]) <= 0.10 * truth[b]);
  }
}

TEST_CASE("sampled shapes stay valid meshes") {
  const ShapeModel model = build_shape_model(corpus_from_models(make_shape_corpus(10, 9)));
  std::mt19937_64 rng(17);
  std::normal_distribution<Scalar> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    VecX targets = model.mean.segment(model.vertex_block(), model.length_block());
    for (int k = 0; k < 4; ++k) {
      const Scalar coeff = 3.0 * g(rng) * std::sqrt(model.variances[k]);
      targets += model.block_scales[1] * coeff *
                 model.components.row(k)
                     .segment(model.vertex_block(), model.length_block())
                     .transpose();
    }
    if (targets.minCoeff() <= 1.0) continue;  // outside plausible anatomy
    const ShapePrediction pred = predict_shape(model, targets, 4);
    pred.mesh.validate(pred.skeleton);  // weights still sum to 1
    for (int t = 0; t < pred.mesh.triangles.rows(); ++t) {
      const Vec3 a = pred.mesh.vertices.row(pred.mesh.triangles(t, 0)).transpose();
      const Vec3 b = pred.mesh.vertices.row(pred.mesh.triangles(t, 1)).transpose();
      const Vec3 c = pred.mesh.vertices.row(pred.mesh.triangles(t, 2)).transpose();
      CHECK((b - a).cross(c - a).norm() > 1e-6);
    }
  }
}

TEST_CASE("estimate_scale ratio behaviour") {
  const DogModel dog = make_dog({});
  CHECK(estimate_scale(dog.mesh.vertices, dog.mesh.vertices) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(estimate_scale(1.5 * dog.mesh.vertices, dog.mesh.vertices) ==
        doctest::Approx(1.5).epsilon(0.02));

  // front half only: still within 15%
  std::vector<int> keep;
  for (int i = 0; i < dog.mesh.vertices.rows(); ++i)
    if (dog.mesh.vertices(i, 2) > 0.0) keep.push_back(i);
  MatX3 half(static_cast<int>(keep.size()), 3);
  for (size_t i = 0; i < keep.size(); ++i) half.row(static_cast<int>(i)) = dog.mesh.vertices.row(keep[i]);
  const Scalar s = estimate_scale(half, dog.mesh.vertices);
  CHECK(std::abs(s - 1.0) <= 0.15);

  MatX3 tiny(10, 3);
  tiny.setZero();
  CHECK_THROWS_AS(estimate_scale(tiny, dog.mesh.vertices), ValidationError);
}

TEST_CASE("topology mismatch rejected") {
  auto dogs = make_shape_corpus(3, 10);
  auto corpus = corpus_from_models(dogs);
  corpus[1].mesh.vertices.conservativeResize(corpus[1].mesh.vertices.rows() - 8, 3);
  corpus[1].mesh.skin_weights.resize(corpus[1].mesh.skin_weights.size() - 8);
  CHECK_THROWS_AS(build_shape_model(corpus), ValidationError);
}

TEST_CASE("shape model archive round trip") {
  const ShapeModel model = build_shape_model(corpus_from_models(make_shape_corpus(6, 11)));
  const auto dir = std::filesystem::temp_directory_path() / "quadpose_shape_test";
  std::filesystem::create_directories(dir);
  write_shape_model((dir / "shape.json").string(), (dir / "shape.blob").string(), model);
  const ShapeModel back = read_shape_model((dir / "shape.json").string());
  CHECK(back.rank() == model.rank());
  CHECK((back.mean - model.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.components - model.components).cwiseAbs().maxCoeff() == 0.0);

  const auto probe = make_dog({0.9, 1.1, 1.0, 1.0, 0.02});
  const VecX targets = rest_bone_lengths(probe.skeleton).tail(model.length_block());
  CHECK((predict_shape(back, targets, 4).coefficients -
         predict_shape(model, targets, 4).coefficients)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}
