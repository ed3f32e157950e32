#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dp2nilm/attack/membership.hpp"

namespace dp2nilm::attack {
namespace {

nn::NetworkSpec SmallSpec() {
  nn::NetworkSpec s;
  s.window_len = 24;
  s.encoder_channels = {4, 4};
  s.encoder_downsample = 2;
  s.decoder_channels = 4;
  return s;
}

Records RandomRecords(std::size_t k, Seed seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 0.3);
  std::bernoulli_distribution b(0.3);
  Records r{nn::Tensor({k, 24}), nn::Tensor({k, 3, 24})};
  for (double& v : r.windows.data) v = d(rng);
  for (double& v : r.states.data) v = b(rng) ? 1.0 : 0.0;
  return r;
}

TEST(RecordLoss, HalfModelGivesLn2) {
  const auto spec = SmallSpec();
  auto p = nn::build_network(spec, 1);
  for (double& v : p.view(p.entry(nn::kDecoderOutLayer, "weight"))) v = 0.0;
  for (double& v : p.view(p.entry(nn::kDecoderOutLayer, "bias"))) v = 0.0;
  const auto recs = RandomRecords(5, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(per_record_loss(p, spec, recs, i), std::log(2.0), 1e-15);
  }
}

TEST(RecordLoss, BatchLossIsMeanOfRecordLosses) {
  const auto spec = SmallSpec();
  const auto p = nn::build_network(spec, 4);
  const auto recs = RandomRecords(6, 5);
  double sum = 0.0;
  for (std::size_t i = 0; i < 6; ++i) sum += per_record_loss(p, spec, recs, i);
  const auto batch = nn::loss_and_grad(p, spec, recs.windows, recs.states).loss;
  EXPECT_NEAR(batch, sum / 6.0, 1e-14);
  EXPECT_EQ(per_record_loss(p, spec, recs, 3), per_record_loss(p, spec, recs, 3));
}

TEST(Attack, IdenticalSetsGiveZeroAsr) {
  const auto spec = SmallSpec();
  const auto p = nn::build_network(spec, 7);
  const auto recs = RandomRecords(20, 8);
  const auto r = membership_attack(p, spec, recs, recs, 9);
  EXPECT_EQ(r.tpr, r.fpr);
  EXPECT_EQ(r.asr, 0.0);
}

TEST(Attack, SeparatedLossesGiveFullAsr) {
  const auto r = attack_with_threshold({0.1, 0.2, 0.3}, {0.9, 1.0, 1.2}, 0.5);
  EXPECT_EQ(r.tpr, 1.0);
  EXPECT_EQ(r.fpr, 0.0);
  EXPECT_EQ(r.asr, 1.0);
  // with the mean-member threshold a tie at the threshold counts as non-member
  const auto s = attack_from_losses({0.25, 0.25, 0.25}, {0.9, 1.0, 1.2});
  EXPECT_EQ(s.tpr, 0.0);
  EXPECT_EQ(s.asr, 0.0);
}

TEST(Attack, RuleApplication) {
  // threshold = mean(0.1, 0.9) = 0.5; 0.1 is a member, 0.9 and 0.5 are not.
  const auto r = attack_from_losses({0.1, 0.9}, {0.5, 0.7});
  EXPECT_EQ(r.avg_train_loss, 0.5);
  EXPECT_EQ(r.tpr, 0.5);
  EXPECT_EQ(r.fpr, 0.0);
  EXPECT_EQ(r.asr, 0.5);
  EXPECT_THROW(attack_from_losses({}, {0.1}), DataError);
  EXPECT_THROW(attack_from_losses({0.1}, {}), DataError);
}

TEST(Attack, RandomInputsRespectBoundsAndIdentity) {
  Rng rng(31);
  std::exponential_distribution<double> e(1.0);
  std::uniform_int_distribution<int> n(1, 40);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> m(n(rng)), nm(n(rng));
    for (double& v : m) v = e(rng);
    for (double& v : nm) v = e(rng) * 1.5;
    const auto r = attack_from_losses(m, nm);
    ASSERT_GE(r.tpr, 0.0);
    ASSERT_LE(r.tpr, 1.0);
    ASSERT_GE(r.fpr, 0.0);
    ASSERT_LE(r.fpr, 1.0);
    ASSERT_EQ(r.asr, r.tpr - r.fpr);
    ASSERT_GE(r.asr, -1.0);
    ASSERT_LE(r.asr, 1.0);
  }
}

TEST(Attack, InvariantUnderIncreasingTransform) {
  // Integer-valued losses keep the mean exact under x -> 2x + 3.
  Rng rng(17);
  std::uniform_int_distribution<int> d(0, 20);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> m(8), nm(8), m2(8), nm2(8);
    for (int i = 0; i < 8; ++i) {
      m[i] = d(rng);
      nm[i] = d(rng);
      m2[i] = 2.0 * m[i] + 3.0;
      nm2[i] = 2.0 * nm[i] + 3.0;
    }
    const auto a = attack_from_losses(m, nm);
    const auto b = attack_from_losses(m2, nm2);
    ASSERT_EQ(a.asr, b.asr);
    ASSERT_EQ(b.avg_train_loss, 2.0 * a.avg_train_loss + 3.0);
  }
}

TEST(Attack, BalancesPoolsBySubsampling) {
  const auto spec = SmallSpec();
  const auto p = nn::build_network(spec, 3);
  const auto r = membership_attack(p, spec, RandomRecords(30, 1), RandomRecords(12, 2), 5);
  EXPECT_EQ(r.member_count, 12u);
  EXPECT_EQ(r.nonmember_count, 12u);
  const auto again = membership_attack(p, spec, RandomRecords(30, 1), RandomRecords(12, 2), 5);
  EXPECT_EQ(r.asr, again.asr);
  EXPECT_THROW(membership_attack(p, spec, Records{}, RandomRecords(3, 1), 5), DataError);
}

TEST(Subsample, SortedDistinctAndSeeded) {
  const auto s = subsample(100, 10, 4);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
  EXPECT_EQ(s, subsample(100, 10, 4));
  EXPECT_EQ(subsample(5, 10, 4).size(), 5u);
}

}  // namespace
}  // namespace dp2nilm::attack
