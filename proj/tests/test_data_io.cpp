#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dacnet/errors.hpp"
#include "dacnet/feature_cache.hpp"
#include "dacnet/manifest.hpp"
#include "dacnet/run_config.hpp"
#include "dacnet/synthetic.hpp"
#include "dacnet/wav.hpp"
#include "oracles.hpp"
#include "table_counts.hpp"

using namespace dacnet;
namespace fs = std::filesystem;

namespace {

std::string data_error(const std::string& csv) {
  std::istringstream in(csv);
  try {
    parse_manifest(in, "m.csv", ".", false);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

SyntheticSpec small_spec(std::size_t train, std::size_t val, std::size_t test) {
  SyntheticSpec s = default_synthetic_spec();
  s.train_per_class = train;
  s.validation_per_class = val;
  s.test_per_class = test;
  return s;
}

// Three 10 s clips at 16 kHz plus the manifest naming them.
DatasetManifest tiny_corpus(const fs::path& dir) {
  const SyntheticSpec spec = default_synthetic_spec();
  fs::create_directories(dir / "audio");
  DatasetManifest m;
  m.root = dir;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string rel = "audio/clip" + std::to_string(i) + ".wav";
    write_wav_pcm16(dir / rel, synthesize_segment(spec, i, Split::train, 0), 16000);
    m.rows.push_back({rel, i, i == 2 ? Split::test : Split::train});
  }
  write_manifest(m, dir / "manifest.csv");
  return m;
}

struct EnvGuard {
  ~EnvGuard() { unsetenv("DACNET_CACHE"); }
};

}  // namespace

TEST_SUITE("data_io") {

TEST_CASE("class names cover the nine activities in canonical order") {
  CHECK(class_names().size() == 9);
  CHECK(class_names()[0] == "absence");
  CHECK(class_names()[7] == "watching_tv");
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(parse_class(class_names()[i]) == i);
    CHECK(parse_class(class_display_names()[i]) == i);
  }
  CHECK(parse_class("Working (typing, etc.)") == 8);
  CHECK_FALSE(parse_class("Sleeping").has_value());
  CHECK(parse_split("validation") == Split::validation);
  CHECK_FALSE(parse_split("dev").has_value());
}

TEST_CASE("manifest errors name the offending line") {
  CHECK(data_error("path,label,split\na.wav,cooking,train\nb.wav,Sleeping,test\n").find("m.csv line 3") !=
        std::string::npos);
  CHECK(data_error("path,label,split\na.wav,cooking,train\nb.wav,Sleeping,test\n").find("Sleeping") !=
        std::string::npos);
  CHECK(data_error("path,label,split\na.wav,cooking,train\na.wav,eating,test\n").find("line 3") != std::string::npos);
  CHECK(data_error("path,label,split\na.wav,cooking,holdout\n").find("line 2") != std::string::npos);
  CHECK(data_error("path,label,split\na.wav,cooking\n").find("line 2") != std::string::npos);
  CHECK(data_error("file,class,split\n").find("line 1") != std::string::npos);
  CHECK(data_error("").find("empty") != std::string::npos);

  const auto dir = oracle::temp_dir("manifest_missing");
  std::ofstream(dir / "m.csv") << "path,label,split\nnot_there.wav,eating,train\n";
  try {
    load_manifest(dir / "m.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(load_manifest(dir / "m.csv", false).rows.size() == 1);
}

TEST_CASE("header-only manifest is empty with zero counts") {
  std::istringstream in("\xEF\xBB\xBFpath,label,split\n");
  const DatasetManifest m = parse_manifest(in, "m.csv", ".", true);
  CHECK(m.rows.empty());
  for (const auto& split : m.counts())
    for (std::size_t c : split) CHECK(c == 0);
}

TEST_CASE("quoted fields and display labels parse; write then load is identity") {
  const auto dir = oracle::temp_dir("manifest_rt");
  std::ofstream(dir / "in.csv") << "path,label,split\r\n"
                                   "\"a, b.wav\",\"Social activity (visit, etc.)\",train\r\n"
                                   "c.wav,Watching TV,validation\n"
                                   "\"d\"\"q\"\".wav\",vacuum_cleaning,test\n";
  const DatasetManifest m = load_manifest(dir / "in.csv", false);
  REQUIRE(m.rows.size() == 3);
  CHECK(m.rows[0].path == "a, b.wav");
  CHECK(m.rows[0].label == 5);
  CHECK(m.rows[2].path == "d\"q\".wav");
  write_manifest(m, dir / "out.csv");
  const DatasetManifest back = load_manifest(dir / "out.csv", false);
  CHECK(back.rows == m.rows);
  CHECK(m.split(Split::validation).size() == 1);
}

TEST_CASE("a manifest shaped like the reference corpus reports its split totals") {
  std::ostringstream csv;
  csv << "path,label,split\n";
  const std::array<const std::array<std::size_t, 9>*, 3> tables{&table_counts::kTrain, &table_counts::kValidation,
                                                                &table_counts::kTest};
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < 9; ++c)
      for (std::size_t i = 0; i < (*tables[s])[c]; ++i)
        csv << to_string(kSplits[s]) << "/" << class_names()[c] << "_" << i << ".wav," << class_names()[c] << ","
            << to_string(kSplits[s]) << "\n";
  std::istringstream in(csv.str());
  const DatasetManifest m = parse_manifest(in, "corpus.csv", ".", false);
  const auto counts = m.counts();
  std::array<std::size_t, 3> totals{};
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < 9; ++c) {
      CHECK(counts[s][c] == (*tables[s])[c]);
      totals[s] += counts[s][c];
    }
  CHECK(totals[0] == 41941);
  CHECK(totals[1] == 10552);
  CHECK(totals[2] == 20491);
  const std::string table = format_counts(m);
  CHECK(table.find("41941") != std::string::npos);
  CHECK(table.find("20491") != std::string::npos);
}

TEST_CASE("segment fitting pads, trims, center-crops or rejects") {
  const FrontendConfig cfg;
  CHECK(segment_samples(cfg) == 160000);
  std::vector<double> near(159700, 1.0);
  auto fitted = fit_segment(near, cfg);
  CHECK(fitted.size() == 160000);
  CHECK(fitted[159699] == 1.0);
  CHECK(fitted[159700] == 0.0);
  CHECK(fit_segment(std::vector<double>(160300, 1.0), cfg).size() == 160000);
  std::vector<double> longer(170000);
  for (std::size_t i = 0; i < longer.size(); ++i) longer[i] = static_cast<double>(i);
  fitted = fit_segment(longer, cfg);
  REQUIRE(fitted.size() == 160000);
  CHECK(fitted[0] == 5000.0);
  CHECK_THROWS_AS(fit_segment(std::vector<double>(159000), cfg), DataError);
}

TEST_CASE("synthetic corpus: counts, length and determinism") {
  const auto dir = oracle::temp_dir("synth");
  const SyntheticSpec spec = small_spec(2, 1, 1);
  const DatasetManifest m = generate_synthetic(spec, dir / "a");
  CHECK(m.rows.size() == 9 * 4);
  const auto counts = m.counts();
  for (std::size_t c = 0; c < 9; ++c) {
    CHECK(counts[0][c] == 2);
    CHECK(counts[1][c] == 1);
    CHECK(counts[2][c] == 1);
  }
  const DatasetManifest loaded = load_manifest(dir / "a" / "manifest.csv");
  CHECK(loaded.rows == m.rows);
  for (const auto& row : loaded.rows) {
    const WavAudio w = read_wav(loaded.resolve(row));
    CHECK(w.sample_rate == 16000);
    CHECK(w.samples.size() == 160000);
  }
  generate_synthetic(spec, dir / "b");
  for (const auto& row : m.rows) {
    std::ifstream a(dir / "a" / row.path, std::ios::binary), b(dir / "b" / row.path, std::ios::binary);
    const std::string sa{std::istreambuf_iterator<char>(a), {}}, sb{std::istreambuf_iterator<char>(b), {}};
    CHECK(sa == sb);
  }
  const auto x = synthesize_segment(spec, 4, Split::test, 0);
  CHECK(x == synthesize_segment(spec, 4, Split::test, 0));
  CHECK(x != synthesize_segment(spec, 4, Split::test, 1));
  SyntheticSpec other = spec;
  other.seed = 2;
  CHECK(x != synthesize_segment(other, 4, Split::test, 0));
}

TEST_CASE("synthetic signatures are pairwise distinct and validated") {
  SyntheticSpec s = default_synthetic_spec();
  CHECK_NOTHROW(s.validate());
  s.classes[3] = s.classes[5];
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = default_synthetic_spec();
  s.classes[0].noise_high_hz = 9000.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = default_synthetic_spec();
  s.classes.pop_back();
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("a linear classifier on mean log-mel vectors separates the synthetic classes") {
  // Softmax regression on standardized 28-d time-averaged log-mel, trained by batch gradient descent.
  const SyntheticSpec spec = default_synthetic_spec();
  const FrontendConfig cfg;
  auto mean_logmel = [&](std::size_t label, Split split, std::size_t index) {
    const auto audio = synthesize_segment(spec, label, split, index);
    const Tensor mel = mel_project_log(stft_power(audio, cfg), cfg);
    std::vector<double> v(mel.dim(0), 0.0);
    for (std::size_t b = 0; b < mel.dim(0); ++b) {
      for (std::size_t t = 0; t < mel.dim(1); ++t) v[b] += mel[b * mel.dim(1) + t];
      v[b] /= static_cast<double>(mel.dim(1));
    }
    return v;
  };
  std::vector<std::vector<double>> xtr, xte;
  std::vector<std::size_t> ytr, yte;
  for (std::size_t c = 0; c < 9; ++c) {
    for (std::size_t i = 0; i < 12; ++i) {
      xtr.push_back(mean_logmel(c, Split::train, i));
      ytr.push_back(c);
    }
    for (std::size_t i = 0; i < 6; ++i) {
      xte.push_back(mean_logmel(c, Split::test, i));
      yte.push_back(c);
    }
  }
  const std::size_t d = xtr[0].size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& x : xtr)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[j] / xtr.size();
  for (const auto& x : xtr)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (x[j] - mu[j]) * (x[j] - mu[j]) / xtr.size();
  auto standardize = [&](std::vector<std::vector<double>>& xs) {
    for (auto& x : xs)
      for (std::size_t j = 0; j < d; ++j) x[j] = (x[j] - mu[j]) / std::sqrt(sd[j] + 1e-12);
  };
  standardize(xtr);
  standardize(xte);
  std::vector<double> w(9 * (d + 1), 0.0);
  auto scores = [&](const std::vector<double>& x) {
    std::vector<double> s(9);
    for (std::size_t c = 0; c < 9; ++c) {
      s[c] = w[c * (d + 1) + d];
      for (std::size_t j = 0; j < d; ++j) s[c] += w[c * (d + 1) + j] * x[j];
    }
    return s;
  };
  for (int it = 0; it < 500; ++it) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t n = 0; n < xtr.size(); ++n) {
      auto s = scores(xtr[n]);
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double& v : s) z += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < 9; ++c) {
        const double err = s[c] / z - (c == ytr[n] ? 1.0 : 0.0);
        for (std::size_t j = 0; j < d; ++j) g[c * (d + 1) + j] += err * xtr[n][j];
        g[c * (d + 1) + d] += err;
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 0.5 * g[k] / xtr.size();
  }
  std::size_t correct = 0;
  for (std::size_t n = 0; n < xte.size(); ++n) {
    const auto s = scores(xte[n]);
    correct += static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin()) == yte[n];
  }
  const double ca = static_cast<double>(correct) / xte.size();
  INFO("held-out CA ", ca);
  CHECK(ca >= 0.8);
}

TEST_CASE("feature cache: hits, fingerprint misses, corruption and bit-equality") {
  const auto dir = oracle::temp_dir("cache");
  const DatasetManifest m = tiny_corpus(dir);
  const FrontendConfig cfg;
  const fs::path root = dir / "cache";
  CacheStats s = build_feature_cache(m, cfg, root);
  CHECK(s.computed == 3);
  CHECK(s.hits == 0);
  CHECK(s.errors.empty());
  s = build_feature_cache(m, cfg, root);
  CHECK(s.computed == 0);
  CHECK(s.hits == 3);

  for (const auto& row : m.rows) {
    const FeatureRecord r = read_feature_file(cache_entry_path(root, cfg, m.resolve(row)));
    CHECK(r.fingerprint == cfg.fingerprint());
    CHECK(max_abs_diff(r.values, features_for_file(m.resolve(row), cfg)) == 0.0);
  }

  FrontendConfig more = cfg;
  more.mel_bins = 40;
  s = build_feature_cache(m, more, root);
  CHECK(s.computed == 3);
  CHECK(cache_entry_path(root, more, m.resolve(m.rows[0])) != cache_entry_path(root, cfg, m.resolve(m.rows[0])));

  const fs::path victim = cache_entry_path(root, cfg, m.resolve(m.rows[1]));
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.write("JUNK", 4);
  }
  s = build_feature_cache(m, cfg, root);
  CHECK(s.computed == 1);
  CHECK(s.hits == 2);
  CHECK(read_feature_file(victim).fingerprint == cfg.fingerprint());

  const Dataset train = load_split(m, Split::train, cfg, root);
  CHECK(train.size() == 2);
  CHECK(train.labels == std::vector<std::size_t>{0, 1});
  CHECK(train.inputs[0].shape() == Shape{3, 28, 499});
}

TEST_CASE("wrong sample rates and short files are listed per file") {
  const auto dir = oracle::temp_dir("cache_err");
  DatasetManifest m = tiny_corpus(dir);
  write_wav_pcm16(dir / "audio/clip1.wav", std::vector<double>(441000, 0.1), 44100);
  write_wav_pcm16(dir / "audio/clip2.wav", std::vector<double>(1000, 0.1), 16000);
  const CacheStats s = build_feature_cache(m, FrontendConfig{}, dir / "cache");
  CHECK(s.computed == 1);
  REQUIRE(s.errors.size() == 2);
  CHECK(s.errors[0].find("clip1.wav") != std::string::npos);
  CHECK(s.errors[0].find("44100") != std::string::npos);
  CHECK(s.errors[1].find("clip2.wav") != std::string::npos);
  try {
    load_split(m, Split::train, FrontendConfig{}, dir / "cache");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("clip1.wav") != std::string::npos);
  }
}

TEST_CASE("multichannel audio uses channel 0") {
  const auto dir = oracle::temp_dir("stereo");
  const SyntheticSpec spec = default_synthetic_spec();
  const auto left = synthesize_segment(spec, 2, Split::train, 0);
  write_wav_pcm16(dir / "mono.wav", left, 16000);
  const WavAudio mono = read_wav(dir / "mono.wav");
  // Stereo copy with an unrelated right channel, built from the mono PCM.
  {
    std::ifstream in(dir / "mono.wav", std::ios::binary);
    std::string bytes{std::istreambuf_iterator<char>(in), {}};
    const std::size_t data = bytes.find("data") + 8;
    std::string pcm = bytes.substr(data);
    std::string inter;
    inter.reserve(pcm.size() * 2);
    for (std::size_t i = 0; i + 1 < pcm.size(); i += 2) {
      inter += pcm.substr(i, 2);
      inter += "\x34\x12";
    }
    std::ofstream out(dir / "stereo.wav", std::ios::binary);
    auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(static_cast<std::uint32_t>(36 + inter.size()));
    out.write("WAVEfmt ", 8);
    u32(16);
    u16(1);
    u16(2);
    u32(16000);
    u32(16000 * 4);
    u16(4);
    u16(16);
    out.write("data", 4);
    u32(static_cast<std::uint32_t>(inter.size()));
    out << inter;
  }
  const WavAudio stereo = read_wav(dir / "stereo.wav");
  CHECK(stereo.channels == 2);
  CHECK(stereo.samples == mono.samples);
  CHECK(max_abs_diff(features_for_file(dir / "stereo.wav", FrontendConfig{}),
                     features_for_file(dir / "mono.wav", FrontendConfig{})) == 0.0);
}

TEST_CASE("cache root priority: explicit, then DACNET_CACHE, then beside the manifest") {
  EnvGuard guard;
  unsetenv("DACNET_CACHE");
  RunConfig c;
  c.manifest = "/data/corpus/manifest.csv";
  CHECK(c.resolved_cache_root() == fs::path("/data/corpus/.dacnet-cache"));
  setenv("DACNET_CACHE", "/tmp/env-cache", 1);
  CHECK(c.resolved_cache_root() == fs::path("/tmp/env-cache"));
  c.cache_root = "/explicit";
  CHECK(c.resolved_cache_root() == fs::path("/explicit"));
}

TEST_CASE("run config JSON round-trips and rejects unknown keys") {
  RunConfig c;
  c.network = "toy-synth";
  c.ablation = Ablation::no_mse;
  c.train.max_epochs = 7;
  c.train.seed = 99;
  c.frontend.channels = InputChannels::replicate;
  c.manifest = "x/manifest.csv";
  c.workers = 3;
  const nlohmann::json j = to_json(c);
  const RunConfig back = merge_run_config(RunConfig{}, j);
  CHECK(back.has_inline_network);
  CHECK(back.network_inline == network_preset("toy-synth"));
  CHECK(back.resolved_network() == c.resolved_network());
  CHECK(back.ablation == Ablation::no_mse);
  CHECK(back.train.max_epochs == 7);
  CHECK(back.train.seed == 99);
  CHECK(back.frontend == c.frontend);
  CHECK(back.manifest == c.manifest);
  CHECK(back.workers == 3);
  CHECK(to_json(back) == j);

  CHECK_THROWS_AS(merge_run_config(RunConfig{}, nlohmann::json{{"trian", {}}}), ConfigError);
  CHECK_THROWS_AS(merge_run_config(RunConfig{}, nlohmann::json{{"train", {{"lr", 1}}}}), ConfigError);
  CHECK_THROWS_AS(merge_run_config(RunConfig{}, nlohmann::json{{"train", {{"batch_size", "big"}}}}), ConfigError);
  const RunConfig partial = merge_run_config(RunConfig{}, nlohmann::json{{"train", {{"batch_size", 8}}}});
  CHECK(partial.train.batch_size == 8);
  CHECK(partial.train.learning_rate == 0.001);
}

}  // TEST_SUITE
