#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "asym/encoder.hpp"
#include "asym/losses.hpp"
#include "oracles.hpp"

using namespace asym;

TEST(Tokenize, LowercasesAndHashesIntoNonPadRange) {
  const auto a = tokenize("Fever  COUGH\tfever", 97);
  ASSERT_EQ(a.ids.size(), 3u);
  EXPECT_EQ(a.ids[0], a.ids[2]);
  for (auto id : a.ids) {
    EXPECT_GE(id, 1u);
    EXPECT_LT(id, 97u);
  }
  EXPECT_EQ(tokenize("fever", 97), tokenize("FEVER", 97));
}

TEST(Tokenize, EmptyTextMapsToPad) {
  EXPECT_EQ(tokenize("", 10).ids, std::vector<std::uint32_t>{kPadId});
  EXPECT_EQ(tokenize("   ", 10).ids, std::vector<std::uint32_t>{kPadId});
}

TEST(Encoder, OutputIsUnitNormAndDeterministic) {
  const auto p = init_encoder(Role::student, 64, {8, 6, 4}, 3);
  const auto e = encode(p, tokenize("alpha beta gamma", 64));
  ASSERT_EQ(e.size(), 4u);
  EXPECT_NEAR(l2_norm(e), 1.0, 1e-12);
  EXPECT_EQ(e, encode(p, tokenize("alpha beta gamma", 64)));
  EXPECT_EQ(init_encoder(Role::student, 64, {8, 6, 4}, 3).values, p.values);
}

TEST(Encoder, EmptyInputEncodesThePadRow) {
  const auto p = init_encoder(Role::student, 16, {4, 3}, 1);
  const auto e = encode(p, tokenize("", 16));
  EXPECT_NEAR(l2_norm(e), 1.0, 1e-12);
}

TEST(Encoder, ZeroedParametersAreDegenerate) {
  auto p = init_encoder(Role::student, 16, {4, 3}, 1);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  EXPECT_THROW(encode(p, tokenize("x", 16)), DegenerateInputError);
}

TEST(Encoder, OutOfRangeTokenIsRejected) {
  const auto p = init_encoder(Role::student, 16, {4, 3}, 1);
  EXPECT_THROW(encode(p, TokenSeq{{16}}), DimensionError);
}

TEST(Encoder, BatchEncodingIsOrderPreservingAcrossThreadCounts) {
  const auto p = init_encoder(Role::teacher, 128, {16, 16, 8}, 5);
  std::vector<TokenSeq> xs;
  for (int i = 0; i < 37; ++i) xs.push_back(tokenize("t" + std::to_string(i) + " shared word" + std::to_string(i % 5), 128));
  const auto one = encode_batch(p, xs, 1);
  for (std::size_t threads : {2u, 3u, 8u}) {
    EXPECT_EQ(encode_batch(p, xs, threads), one);
  }
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(one[i], encode(p, xs[i]));
}

TEST(MrlTruncate, FullDimIsIdentityOnUnitInput) {
  const Vec e = oracle::random_unit(*std::make_unique<std::mt19937_64>(1), 6);
  const auto t = mrl_truncate(e, 6);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(t[i], e[i], 1e-15);
}

TEST(MrlTruncate, PrefixIsRenormalized) {
  const Vec e = {0.6, 0.0, 0.8};
  const auto t = mrl_truncate(e, 1);
  EXPECT_EQ(t, Vec{1.0});
  EXPECT_THROW(mrl_truncate(Vec{0.0, 1.0}, 1), DegenerateInputError);
  EXPECT_THROW(mrl_truncate(e, 4), DimensionError);
  EXPECT_THROW(mrl_truncate(e, 0), DimensionError);
}

TEST(MrlTruncate, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 g(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec e = oracle::random_vec(g, 7);
    const Vec up = oracle::random_vec(g, 4);
    const LossFn f = [&](const std::vector<Vec>& x) {
      LossOutput o;
      o.value = dot(up, mrl_truncate(x[0], 4));
      o.grads.push_back(mrl_truncate_backward(x[0], 4, up));
      return o;
    };
    EXPECT_LT(gradcheck(f, {e}).max_rel_error, 1e-4);
  }
}

TEST(EncoderBackward, MatchesFiniteDifferencesOverAllParameters) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = init_encoder(trial % 2 ? Role::teacher : Role::student, 20, {5, 4, 3}, 100 + trial);
    const auto up = oracle::random_vec(g, 3);
    const auto rep = gradcheck_encoder(p, TokenSeq{{1, 7, 7, 19}}, up);
    EXPECT_LT(rep.max_rel_error, 1e-4) << "worst component " << rep.worst_component;
    EXPECT_EQ(rep.components_checked, p.values.size());
  }
}

TEST(EncoderBackward, SingleLayerEncoder) {
  const auto p = init_encoder(Role::student, 10, {4, 2}, 9);
  EXPECT_LT(gradcheck_encoder(p, TokenSeq{{2, 3}}, Vec{0.3, -1.0}).max_rel_error, 1e-4);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto p = init_encoder(Role::teacher, 32, {8, 8, 6}, 42);
  p.stage_tag = "pretrain";
  const auto bytes = checkpoint_bytes(p);
  const auto q = checkpoint_from_bytes(bytes);
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(q.role, Role::teacher);
  EXPECT_EQ(q.seed, 42u);
  EXPECT_EQ(q.stage_tag, "pretrain");
  EXPECT_EQ(q.layout.dims(), p.layout.dims());
  EXPECT_EQ(checkpoint_bytes(q), bytes);
  EXPECT_EQ(checkpoint_hash(q), checkpoint_hash(p));

  const auto path = (std::filesystem::temp_directory_path() / "asym_ckpt_test.bin").string();
  save_checkpoint(p, path);
  EXPECT_EQ(load_checkpoint(path).values, p.values);
  std::filesystem::remove(path);
}

TEST(Checkpoint, PayloadIsLittleEndianDoubles) {
  auto p = init_encoder(Role::student, 2, {1, 1}, 1);
  p.values = {1.0, -2.0, 0.5, 0.25};
  const auto bytes = checkpoint_bytes(p);
  std::uint64_t hlen = 0;
  for (int i = 7; i >= 0; --i) hlen = (hlen << 8) | static_cast<unsigned char>(bytes[i]);
  const auto header = Json::parse(bytes.substr(8, hlen));
  EXPECT_EQ(header["role"], "student");
  ASSERT_EQ(bytes.size(), 8 + hlen + 4 * 8);
  double v = 0;
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(bytes[8 + hlen + 8 + i]);
  std::memcpy(&v, &bits, 8);
  EXPECT_EQ(v, -2.0);
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  const auto p = init_encoder(Role::student, 4, {2, 2}, 1);
  auto bytes = checkpoint_bytes(p);
  EXPECT_THROW(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 8)), IoError);
  EXPECT_THROW(checkpoint_from_bytes("abc"), IoError);
}

TEST(Params, ValidateRejectsNonFinite) {
  auto p = init_encoder(Role::student, 4, {2, 2}, 1);
  p.values[3] = NAN;
  EXPECT_THROW(p.validate(), NumericError);
  EXPECT_THROW(ParamLayout(4, {2}), ConfigError);
}
