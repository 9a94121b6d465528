#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ssvc/corpus.hpp"
#include "ssvc/features.hpp"
#include "ssvc/metrics.hpp"

using namespace ssvc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("ssvc_test_features_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

SynthConfig small_config() {
  SynthConfig c;
  c.train_per_domain = 6;
  c.eval_per_domain = 3;
  return c;
}

}  // namespace

TEST(Domain, CodesAndPairs) {
  EXPECT_NO_THROW(DomainCode{4}.validate(4));
  EXPECT_THROW(DomainCode{0}.validate(4), std::invalid_argument);
  EXPECT_THROW(DomainCode{5}.validate(4), std::invalid_argument);
  EXPECT_NO_THROW((DomainPair{{2}, {2}}.validate(4)));
  EXPECT_EQ((DomainPair{{1}, {1}}.index(4)), 0u);
  EXPECT_EQ((DomainPair{{4}, {4}}.index(4)), 15u);
}

TEST(Domain, TwelveConversionPairsForFourDomains) {
  auto p = conversion_pairs(4);
  ASSERT_EQ(p.size(), 12u);
  EXPECT_EQ(p.front(), (DomainPair{{1}, {2}}));
  EXPECT_EQ(p.back(), (DomainPair{{4}, {3}}));
  EXPECT_EQ(conversion_pairs(4, true).size(), 16u);
}

TEST(FeatureMap, Invariants) {
  EXPECT_THROW(FeatureMap(0, 4), std::invalid_argument);
  EXPECT_THROW(FeatureMap(2, 2, std::vector<double>(3)), std::invalid_argument);
  FeatureMap m(2, 3);
  EXPECT_TRUE(m.all_finite());
  m.at(1, 2) = NAN;
  EXPECT_FALSE(m.all_finite());
}

TEST(Synth, SameSeedGivesBitIdenticalDatasets) {
  auto a = synth_dataset(small_config());
  auto b = synth_dataset(small_config());
  EXPECT_EQ(a.train.items, b.train.items);
  EXPECT_EQ(a.eval.items, b.eval.items);
  EXPECT_EQ(a.prototypes, b.prototypes);
  auto c = small_config();
  c.seed = 8;
  EXPECT_NE(synth_dataset(c).train.items, a.train.items);
}

TEST(Synth, DefaultCountsAndShapes) {
  auto d = synth_dataset(SynthConfig{});
  EXPECT_EQ(d.train.items.size(), 4u * 80u);
  EXPECT_EQ(d.eval.items.size(), 4u * 30u);
  EXPECT_EQ(d.prototypes.size(), 4u);
  for (int k = 1; k <= 4; ++k) {
    EXPECT_EQ(d.train.indices_of({k}).size(), 80u);
    EXPECT_EQ(d.eval.indices_of({k}).size(), 30u);
  }
  for (const auto& m : d.train.items) {
    EXPECT_EQ(m.n_mcep(), 16u);
    EXPECT_EQ(m.n_frames(), 64u);
    EXPECT_TRUE(m.all_finite());
  }
}

TEST(Synth, NoNoiseMeansUtterancesEqualPrototypes) {
  auto c = small_config();
  c.noise_scale = 0.0;
  c.gain_spread = 0.0;
  auto d = synth_dataset(c);
  for (const auto& m : d.train.items) {
    const auto& p = d.prototypes[std::size_t(m.domain().id - 1)];
    EXPECT_EQ(m.data().size(), p.data().size());
    for (std::size_t i = 0; i < m.data().size(); ++i) EXPECT_EQ(m.data()[i], p.data()[i]);
    EXPECT_EQ(mcd(m, p), 0.0);
  }
}

TEST(Synth, PrototypesAreConstantOverFrames) {
  auto d = synth_dataset(small_config());
  for (const auto& p : d.prototypes) {
    for (std::size_t k = 0; k < p.n_mcep(); ++k)
      for (std::size_t t = 1; t < p.n_frames(); ++t) EXPECT_EQ(p.at(k, t), p.at(k, 0));
  }
}

TEST(Synth, BetweenDomainDistanceExceedsWithinDomain) {
  auto d = synth_dataset(SynthConfig{});
  double between = 0.0, within = 0.0;
  int nb = 0, nw = 0;
  for (std::size_t i = 0; i < d.prototypes.size(); ++i)
    for (std::size_t j = 0; j < d.prototypes.size(); ++j)
      if (i != j) between += mcd(d.prototypes[i], d.prototypes[j]), ++nb;
  for (const auto& m : d.eval.items) {
    within += mcd(m, d.prototypes[std::size_t(m.domain().id - 1)]);
    ++nw;
  }
  between /= nb;
  within /= nw;
  EXPECT_GT(between, within);
  // Margin on the default corpus, from the metric itself.
  EXPECT_GT(between - within, 5.0) << "between " << between << " within " << within;
}

TEST(Synth, TrainAndEvalShareNoUtterance) {
  auto d = synth_dataset(SynthConfig{});
  std::set<std::uint64_t> train;
  for (const auto& m : d.train.items) train.insert(content_hash(m));
  for (const auto& m : d.eval.items) EXPECT_EQ(train.count(content_hash(m)), 0u);
}

TEST(Synth, NoiseHasTemporalCorrelation) {
  auto c = SynthConfig{};
  c.gain_spread = 0.0;
  auto d = synth_dataset(c);
  double num = 0.0, den = 0.0;
  for (const auto& m : d.train.items) {
    const auto& p = d.prototypes[std::size_t(m.domain().id - 1)];
    for (std::size_t k = 0; k < m.n_mcep(); ++k)
      for (std::size_t t = 1; t < m.n_frames(); ++t) {
        const double a = m.at(k, t) - p.at(k, t), b = m.at(k, t - 1) - p.at(k, t - 1);
        num += a * b;
        den += b * b;
      }
  }
  EXPECT_NEAR(num / den, kArCoefficient, 0.05);
}

TEST(Synth, InvalidConfigRejected) {
  auto c = small_config();
  c.n_domains = 0;
  EXPECT_THROW(synth_dataset(c), std::invalid_argument);
  c = small_config();
  c.prototype_smoothness = 0.0;
  EXPECT_THROW(synth_dataset(c), std::invalid_argument);
}

TEST(Batch, SingleUtteranceDataset) {
  Dataset ds;
  ds.n_domains = 4;
  ds.items.push_back(FeatureMap(4, 4, DomainCode{3}));
  Rng rng(1);
  auto b = sample_batch(ds, 1, rng);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].x, ds.items[0]);
  EXPECT_EQ(b[0].pair.source, DomainCode{3});
}

TEST(Batch, FixedSeedIsReproducible) {
  auto d = synth_dataset(small_config());
  Rng r1(5), r2(5);
  auto a = sample_batch(d.train, 8, r1);
  auto b = sample_batch(d.train, 8, r2);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].pair, b[i].pair);
    EXPECT_EQ(a[i].pair.source, a[i].x.domain());
  }
}

TEST(Batch, TargetDomainsAreUniform) {
  auto d = synth_dataset(small_config());
  Rng rng(11);
  std::vector<int> counts(5, 0);
  const int draws = 10000;
  for (int i = 0; i < draws / 10; ++i) {
    for (const auto& it : sample_batch(d.train, 10, rng)) ++counts[std::size_t(it.pair.target.id)];
  }
  for (int k = 1; k <= 4; ++k) {
    EXPECT_NEAR(100.0 * counts[std::size_t(k)] / draws, 25.0, 0.5) << "domain " << k;
  }
}

TEST(Batch, Errors) {
  Dataset empty;
  empty.n_domains = 4;
  Rng rng(1);
  EXPECT_THROW(sample_batch(empty, 2, rng), std::invalid_argument);
  auto d = synth_dataset(small_config());
  EXPECT_THROW(sample_batch(d.train, 0, rng), std::invalid_argument);
}

TEST(FeatureIo, RoundTripIsExact) {
  auto dir = temp_dir("roundtrip");
  auto d = synth_dataset(small_config());
  for (const auto& m : d.train.items) {
    save_features(dir / "x.ssvc", m);
    EXPECT_EQ(load_features(dir / "x.ssvc"), m);
  }
}

TEST(FeatureIo, HeaderLayout) {
  FeatureMap m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6}, DomainCode{258});
  auto bytes = encode_features(m);
  ASSERT_EQ(bytes.size(), 15u + 4u * 6u);
  EXPECT_EQ(bytes.substr(0, 4), "SSVC");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 2);  // 258 little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 3);
  // 1.0f = 0x3F800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[15 + 3]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[15 + 2]), 0x80);
}

TEST(FeatureIo, WrongMagicIsAFormatError) {
  auto bytes = encode_features(FeatureMap(2, 2, DomainCode{1}));
  bytes[0] = 'X';
  EXPECT_THROW(decode_features(bytes), feature_format_error);
  EXPECT_THROW(decode_features("SS"), feature_format_error);
}

TEST(FeatureIo, ShortPayloadIsATruncationError) {
  auto bytes = encode_features(FeatureMap(2, 4, DomainCode{1}));
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_features(bytes), feature_truncated_error);
  EXPECT_THROW(decode_features(bytes.substr(0, 9)), feature_truncated_error);
}

TEST(FeatureIo, HugeDeclaredShapeIsAnOverflowError) {
  auto bytes = encode_features(FeatureMap(2, 2, DomainCode{1}));
  for (int i = 7; i < 15; ++i) bytes[std::size_t(i)] = static_cast<char>(0xFF);
  EXPECT_THROW(decode_features(bytes), feature_shape_overflow_error);
}

TEST(FeatureIo, ErrorsAreDistinctTypes) {
  EXPECT_FALSE((std::is_base_of_v<feature_truncated_error, feature_format_error>));
  EXPECT_FALSE((std::is_base_of_v<feature_format_error, feature_shape_overflow_error>));
  EXPECT_TRUE((std::is_base_of_v<feature_io_error, feature_truncated_error>));
}

TEST(FeatureIo, MissingFileIsAnIoError) {
  EXPECT_THROW(load_features("/nonexistent/dir/x.ssvc"), feature_io_error);
}

TEST(Corpus, WriteAndLoadRoundTrip) {
  auto dir = temp_dir("corpus");
  auto data = TrainData::from(synth_dataset(small_config()));
  write_corpus(dir, data);
  EXPECT_TRUE(fs::exists(dir / "train.list"));
  EXPECT_TRUE(fs::exists(dir / "eval.list"));
  EXPECT_TRUE(fs::exists(dir / "prototypes.list"));
  auto back = load_corpus(dir, 4);
  EXPECT_EQ(back.train.items, data.train.items);
  EXPECT_EQ(back.eval.items, data.eval.items);
  EXPECT_EQ(back.prototypes, data.prototypes);
}

TEST(Corpus, ManifestPathsAreRelativeToTheManifest) {
  auto dir = temp_dir("manifest");
  save_features(dir / "a.ssvc", FeatureMap(2, 2, DomainCode{1}));
  {
    std::ofstream os(dir / "m.list");
    os << "a.ssvc\n\n";
  }
  auto files = read_manifest(dir / "m.list");
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(files[0], dir / "a.ssvc");
}

TEST(Corpus, DomainOutsideRangeIsRejected) {
  auto dir = temp_dir("badrange");
  save_features(dir / "a.ssvc", FeatureMap(2, 2, DomainCode{5}));
  write_manifest(dir / "m.list", {"a.ssvc"});
  EXPECT_THROW(load_dataset(dir / "m.list", 4), std::invalid_argument);
}
