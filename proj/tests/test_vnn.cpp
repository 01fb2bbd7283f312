#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "nimap/vnn.hpp"
#include "nimap/weights_io.hpp"
#include "test_support.hpp"

using namespace nimap;
using namespace nimap::testsupport;

TEST_CASE("vnLinear identity leaves the feature unchanged") {
  InitRng rng(1);
  const Feature v = randomFeature(3, rng);
  VNLinearWeights w;
  w.weight = Eigen::MatrixXd::Identity(3, 3);
  CHECK((vnLinear(w, v) - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vnLinear 32x1 lifts a single channel to 32") {
  InitRng rng(2);
  VNLinearWeights w = makeVNLinear(32, 1, rng);
  const Feature v = randomFeature(1, rng);
  const Feature out = vnLinear(w, v);
  CHECK(out.rows() == 32);
  CHECK(out.cols() == 3);
}

TEST_CASE("vnLinear commutes with rotation") {
  InitRng rng(3);
  VNLinearWeights w = makeVNLinear(2, 2, rng);
  const Feature v = randomFeature(2, rng);
  const Mat3 r = randomRotation(7);
  const Feature a = vnLinear(w, Feature(v * r));
  const Feature b = vnLinear(w, v) * r;
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("vnLinear rejects mismatched shapes") {
  InitRng rng(4);
  VNLinearWeights w = makeVNLinear(4, 2, rng);
  const Feature v = randomFeature(3, rng);
  CHECK_THROWS_AS(vnLinear(w, v), DimensionError);
}

namespace {

// Single-channel projection with explicit q/k maps.
Feature reluOnVectors(const Eigen::RowVector3d& q, const Eigen::RowVector3d& k) {
  // Feature holds [qvec; kvec]; W selects the first row, U the second.
  VNReluWeights w;
  w.featMap.resize(2, 2);
  w.featMap << 1, 0, 0, 0;
  w.dirMap.resize(2, 2);
  w.dirMap << 0, 1, 0, 0;
  Feature v(2, 3);
  v.row(0) = q;
  v.row(1) = k;
  return vnLeakyRelu(w, v);
}

}  // namespace

TEST_CASE("vnLeakyRelu keeps q when k equals q") {
  const Eigen::RowVector3d q(0.3, -0.2, 0.9);
  const Feature out = reluOnVectors(q, q);
  CHECK((out.row(0) - q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vnLeakyRelu projects away the opposing component") {
  // q = (1,0,0), k = (-1,0,0): <q, k^> = -1, q - <q,k^> k^ = 0.
  const Feature out = reluOnVectors({1, 0, 0}, {-1, 0, 0});
  CHECK(out.row(0).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("vnLeakyRelu boundary <q,k> = 0 takes the pass-through branch") {
  const Feature out = reluOnVectors({1, 0, 0}, {0, 1, 0});
  CHECK((out.row(0) - Eigen::RowVector3d(1, 0, 0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vnLeakyRelu degenerate k falls back to q") {
  const Eigen::RowVector3d q(0.5, 0.25, -1.0);
  const Feature out = reluOnVectors(q, {-1e-13, 0, 0});  // opposing but below cutoff
  CHECK((out.row(0) - q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vnLeakyRelu never lengthens q and is equivariant") {
  InitRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    VNReluWeights w = makeVNRelu(8, rng);
    const Feature v = randomFeature(8, rng);
    const Feature out = vnLeakyRelu(w, v);
    const Feature q = w.featMap * v;
    for (Eigen::Index c = 0; c < 8; ++c) {
      CHECK(out.row(c).norm() <= q.row(c).norm() + 1e-12);
    }
    const Mat3 r = randomRotation(100 + trial);
    const Feature a = vnLeakyRelu(w, Feature(v * r));
    const Feature b = out * r;
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("vnMeanPool basics") {
  InitRng rng(6);
  const Feature a = randomFeature(4, rng);
  const Feature b = randomFeature(4, rng);
  CHECK((vnMeanPool({a}) - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((vnMeanPool({a, b}) - 0.5 * (a + b)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(vnMeanPool({}), EmptyInputError);

  const Mat3 r = randomRotation(42);
  const Feature pooledThenRotated = vnMeanPool({a, b}) * r;
  const Feature rotatedThenPooled = vnMeanPool({Feature(a * r), Feature(b * r)});
  CHECK((pooledThenRotated - rotatedThenPooled).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("batch layers match the single-feature path bit for bit") {
  InitRng rng(7);
  VNLinearWeights lin = makeVNLinear(6, 4, rng);
  VNReluWeights relu = makeVNRelu(6, rng);
  std::vector<Feature> feats;
  FeatureBatch batch(4, 3 * 5);
  for (int s = 0; s < 5; ++s) {
    feats.push_back(randomFeature(4, rng));
    batch.middleCols<3>(3 * s) = feats.back();
  }
  const FeatureBatch linOut = vnLinearBatch(lin, batch);
  const FeatureBatch reluOut = vnLeakyReluBatch(relu, linOut);
  for (int s = 0; s < 5; ++s) {
    const Feature single = vnLeakyRelu(relu, vnLinear(lin, feats[s]));
    CHECK((reluOut.middleCols<3>(3 * s) - single).cwiseAbs().maxCoeff() == 0.0);
  }

  // Mean pool of the batch vs mean of singles.
  std::vector<Feature> outs;
  for (int s = 0; s < 5; ++s) {
    outs.push_back(vnLeakyRelu(relu, vnLinear(lin, feats[s])));
  }
  CHECK((vnMeanPoolBatch(reluOut) - vnMeanPool(outs)).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("initialization is seed-deterministic and bounded") {
  InitRng a(12345), b(12345), c(54321);
  Eigen::MatrixXd ma(16, 32), mb(16, 32), mc(16, 32);
  initUniform(ma, 32, a);
  initUniform(mb, 32, b);
  initUniform(mc, 32, c);
  CHECK((ma - mb).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ma - mc).cwiseAbs().maxCoeff() > 0.0);
  const double bound = 1.0 / std::sqrt(32.0);
  CHECK(ma.cwiseAbs().maxCoeff() <= bound);
  CHECK(ma.cwiseAbs().maxCoeff() > 0.5 * bound);  // draws do reach the bound
}

TEST_CASE("encoder weight file round-trips at 32-bit precision") {
  EncoderParams enc = makeEncoder(99);
  std::stringstream buf;
  serializeEncoder(enc, buf);
  EncoderParams back = deserializeEncoder(buf);
  // Entries are float32-quantized; round-tripping the quantized values is exact.
  std::stringstream buf2;
  serializeEncoder(back, buf2);
  EncoderParams back2 = deserializeEncoder(buf2);
  CHECK((back.point.lin1.weight - back2.point.lin1.weight).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.normal.relu2.dirMap - back2.normal.relu2.dirMap).cwiseAbs().maxCoeff() == 0.0);
  CHECK((enc.point.lin1.weight - back.point.lin1.weight).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("weight file rejects corruption") {
  EncoderParams enc = makeEncoder(7);
  std::stringstream buf;
  serializeEncoder(enc, buf);
  std::string bytes = buf.str();

  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::stringstream in(bad);
    CHECK_THROWS_AS(deserializeEncoder(in), FormatError);
  }
  {
    std::string bad = bytes;
    bad[4] = 42;  // version
    std::stringstream in(bad);
    CHECK_THROWS_AS(deserializeEncoder(in), FormatError);
  }
  {
    std::stringstream in(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(deserializeEncoder(in), FormatError);
  }
}
