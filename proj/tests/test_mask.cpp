#include <doctest.h>

#include <vector>

#include "dcdm/mask.hpp"
#include "dcdm/rng.hpp"

using namespace dcdm;

namespace {

// Independent constructor of the dual-stream block-causal training mask,
// written directly from the block definition rather than via chunk clauses.
JointMask block_dual_mask_oracle(int l, int block, const std::vector<std::uint8_t>& nu) {
  JointMask m = JointMask::all_false(2 * l);
  auto blk = [block](int pos) { return pos / block; };
  for (int q = 0; q < 2 * l; ++q)
    for (int k = 0; k < 2 * l; ++k) {
      const bool qn = q < l, kn = k < l;
      const int bq = blk(q % l), bk = blk(k % l);
      bool ok = false;
      if (qn && kn) ok = bq == bk;
      if (qn && !kn) ok = bq > bk;
      if (!qn && !kn) ok = bq >= bk && (nu[k % l] == 0 || (q % l) == (k % l));
      m.set(q, k, ok);
    }
  return m;
}

std::vector<int> random_chunks(int l, int kmax, Rng& rng) {
  std::vector<int> c(l);
  for (int& v : c) v = 1 + static_cast<int>(rng.below(kmax));
  return c;
}

std::vector<std::uint8_t> random_nu(int l, Rng& rng) {
  std::vector<std::uint8_t> nu(l);
  for (auto& v : nu) v = rng.below(2);
  return nu;
}

}  // namespace

TEST_CASE("noise mask frozen examples") {
  // nu = (0, 1): unmasked key visible to all, masked key only to itself
  JointMask m = noise_mask({0, 1});
  CHECK(m.at(0, 0));
  CHECK(!m.at(0, 1));
  CHECK(m.at(1, 0));
  CHECK(m.at(1, 1));

  JointMask clean = noise_mask({0, 0, 0});
  for (int q = 0; q < 3; ++q)
    for (int k = 0; k < 3; ++k) CHECK(clean.at(q, k));

  JointMask full = noise_mask({1, 1, 1});  // fully masked -> identity
  for (int q = 0; q < 3; ++q)
    for (int k = 0; k < 3; ++k) CHECK(full.at(q, k) == (q == k));
}

TEST_CASE("inference chunk mask frozen example") {
  JointMask m = chunk_mask_inference({1, 2, 1});
  const std::vector<std::vector<int>> want = {{1, 0, 1}, {1, 1, 1}, {1, 0, 1}};
  for (int q = 0; q < 3; ++q)
    for (int k = 0; k < 3; ++k) CHECK(m.at(q, k) == (want[q][k] != 0));

  JointMask constant = chunk_mask_inference({2, 2, 2, 2});
  for (int q = 0; q < 4; ++q)
    for (int k = 0; k < 4; ++k) CHECK(constant.at(q, k));
}

TEST_CASE("inference mask for positional chunks equals block-causal attention") {
  for (int block : {1, 2, 4}) {
    const int l = 8;
    JointMask m = chunk_mask_inference(positional_chunks(l, block));
    for (int q = 0; q < l; ++q)
      for (int k = 0; k < l; ++k) CHECK(m.at(q, k) == (k / block <= q / block));
  }
}

TEST_CASE("training clauses frozen example L=2") {
  // c = (1, 2), nu = (1, 0); rows before the clean-query noise intersection
  JointMask m = training_chunk_clauses({1, 2}, {1, 0});
  const std::vector<std::vector<int>> want = {
      {1, 0, 0, 0}, {0, 1, 1, 0}, {0, 0, 1, 0}, {0, 0, 1, 1}};
  for (int q = 0; q < 4; ++q)
    for (int k = 0; k < 4; ++k) {
      INFO("q=" << q << " k=" << k);
      CHECK(m.at(q, k) == (want[q][k] != 0));
    }

  // after the intersection the clean query at the masked position keeps only
  // itself; the clean query at the unmasked position loses the masked key
  JointMask full = joint_training_mask({1, 2}, {1, 0});
  const std::vector<std::vector<int>> want_full = {
      {1, 0, 0, 0}, {0, 1, 1, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  for (int q = 0; q < 4; ++q)
    for (int k = 0; k < 4; ++k) {
      INFO("q=" << q << " k=" << k);
      CHECK(full.at(q, k) == (want_full[q][k] != 0));
    }
}

TEST_CASE("clean queries never attend the noisy half") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const int l = 2 + static_cast<int>(rng.below(10));
    JointMask m = joint_training_mask(random_chunks(l, 4, rng), random_nu(l, rng));
    for (int q = l; q < 2 * l; ++q)
      for (int k = 0; k < l; ++k) CHECK(!m.at(q, k));
  }
}

TEST_CASE("noisy-noisy permissions are symmetric") {
  Rng rng(19);
  for (int rep = 0; rep < 50; ++rep) {
    const int l = 2 + static_cast<int>(rng.below(10));
    JointMask m = joint_training_mask(random_chunks(l, 4, rng), random_nu(l, rng));
    for (int q = 0; q < l; ++q)
      for (int k = 0; k < l; ++k) CHECK(m.at(q, k) == m.at(k, q));
  }
}

TEST_CASE("training mask restricted to clean-clean with nothing masked is the inference mask") {
  Rng rng(23);
  for (int rep = 0; rep < 50; ++rep) {
    const int l = 2 + static_cast<int>(rng.below(10));
    auto c = random_chunks(l, 4, rng);
    JointMask train = joint_training_mask(c, std::vector<std::uint8_t>(l, 0));
    JointMask infer = chunk_mask_inference(c);
    for (int q = 0; q < l; ++q)
      for (int k = 0; k < l; ++k) CHECK(train.at(l + q, l + k) == infer.at(q, k));
  }
}

TEST_CASE("positional chunks reproduce the block-positional dual-stream mask") {
  Rng rng(29);
  for (int rep = 0; rep < 100; ++rep) {
    const int l = 2 + static_cast<int>(rng.below(15));
    const int block = 1 + static_cast<int>(rng.below(5));
    auto nu = random_nu(l, rng);
    JointMask viaChunks = joint_training_mask(positional_chunks(l, block), nu);
    JointMask oracle = block_dual_mask_oracle(l, block, nu);
    REQUIRE(viaChunks.size == oracle.size);
    CHECK(viaChunks.allow == oracle.allow);
  }
}

TEST_CASE("merging adjacent chunk ids preserves clause-1 and clause-3 permissions") {
  Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const int l = 3 + static_cast<int>(rng.below(10));
    auto c = random_chunks(l, 5, rng);
    auto nu = random_nu(l, rng);
    const int j = 1 + static_cast<int>(rng.below(4));  // merge id j+1 into j
    auto merged = c;
    for (int& v : merged)
      if (v == j + 1) v = j;
    JointMask before = joint_training_mask(c, nu);
    JointMask after = joint_training_mask(merged, nu);
    for (int q = 0; q < l; ++q)
      for (int k = 0; k < l; ++k) {
        if (before.at(q, k)) CHECK(after.at(q, k));                    // clause 1
        if (before.at(l + q, l + k)) CHECK(after.at(l + q, l + k));    // clause 3
      }
  }
}

TEST_CASE("single-chunk degeneration: noisy half fully bidirectional, no clean conditioning") {
  auto nu = std::vector<std::uint8_t>{1, 0, 1, 1};
  JointMask m = joint_training_mask({1, 1, 1, 1}, nu);
  for (int q = 0; q < 4; ++q)
    for (int k = 0; k < 4; ++k) {
      CHECK(m.at(q, k));           // clause 1 everywhere in the noisy half
      CHECK(!m.at(q, 4 + k));      // clause 2 never fires with equal ids
    }
}

TEST_CASE("leakage verifier passes correctly built masks") {
  Rng rng(37);
  for (int rep = 0; rep < 200; ++rep) {
    const int l = 2 + static_cast<int>(rng.below(15));
    auto c = random_chunks(l, 5, rng);
    auto nu = random_nu(l, rng);
    LeakageReport rep_out = verify_no_leakage(joint_training_mask(c, nu), c, nu);
    INFO(format_leakage_path(rep_out, l));
    CHECK(rep_out.ok);
  }
}

TEST_CASE("weakening clause 2 to >= is caught with a short path") {
  // same-chunk conditioning would let a masked token see its own chunk's truth
  const std::vector<int> c = {1, 1, 2};
  const std::vector<std::uint8_t> nu = {1, 1, 0};
  JointMask sabotaged = training_chunk_clauses(c, nu);
  const int l = 3;
  for (int q = 0; q < l; ++q)
    for (int k = 0; k < l; ++k)
      sabotaged.set(q, l + k, c[q] >= c[k]);  // clause 2 weakened
  // keep the clean-query noise intersection as in the honest mask
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < l; ++j)
      if (!(nu[j] == 0 || i == j)) sabotaged.set(l + i, l + j, false);
  LeakageReport rep = verify_no_leakage(sabotaged, c, nu);
  CHECK(!rep.ok);
  CHECK(rep.path.size() >= 2);
  MESSAGE(format_leakage_path(rep, l));
}

TEST_CASE("an all-true mask is flagged as leaking") {
  const std::vector<int> c = {1, 2};
  const std::vector<std::uint8_t> nu = {1, 1};
  LeakageReport rep = verify_no_leakage(JointMask::all_true(4), c, nu);
  CHECK(!rep.ok);
}
