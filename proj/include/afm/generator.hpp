#pragma once

// Generator backends. The mock stands in for the neural generator: it blends
// the prompt covariates, adds seeded jitter, and points at a placeholder tone.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "afm/domain.hpp"
#include "afm/errors.hpp"
#include "afm/random.hpp"

namespace afm {

struct GeneratedAudio {
  FeatureVector song_features;
  std::string audio_ref;
};

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  // Must be deterministic for fixed inputs and seed. Throwing marks the job failed.
  virtual GeneratedAudio generate(const Prime& prime, const ArtistProfile& artist,
                                  const GenreProfile& genre, std::uint64_t seed) const = 0;
};

inline constexpr double kMockPrimeWeight = 0.25;
inline constexpr double kMockArtistWeight = 0.375;
inline constexpr double kMockGenreWeight = 0.375;
inline constexpr double kMockJitter = 0.05;
inline constexpr double kMockLoudnessJitterScale = 10.0;

inline FeatureVector mock_blend_center(const FeatureVector& prime, const FeatureVector& artist,
                                       const FeatureVector& genre) {
  FeatureVector c;
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    c[i] = kMockPrimeWeight * prime[i] + kMockArtistWeight * artist[i] + kMockGenreWeight * genre[i];
  return c;
}

inline std::uint64_t mock_stream_seed(const Prime& prime, const ArtistProfile& artist,
                                      const GenreProfile& genre, std::uint64_t seed) {
  std::uint64_t h = fnv1a64(prime.prime_id);
  h = fnv1a64("|", h);
  h = fnv1a64(artist.artist_id, h);
  h = fnv1a64("|", h);
  h = fnv1a64(genre.genre_id, h);
  return mix_seed(seed, h);
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

inline GeneratedAudio mock_generate(const Prime& prime, const ArtistProfile& artist,
                                    const GenreProfile& genre, std::uint64_t seed) {
  const std::uint64_t stream = mock_stream_seed(prime, artist, genre, seed);
  Rng rng(stream);
  const FeatureVector center =
      mock_blend_center(prime.prime_artist_features, artist.features, genre.features);
  GeneratedAudio out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    double jitter = uniform_real(rng, -kMockJitter, kMockJitter);
    if (i == static_cast<std::size_t>(Feature::loudness)) jitter *= kMockLoudnessJitterScale;
    const auto [lo, hi] = feature_domain(i);
    out.song_features[i] = std::clamp(center[i] + jitter, lo, hi);
  }
  out.audio_ref = "mock-tone/" + hex64(stream) + ".wav";
  return out;
}

class MockGenerator final : public GeneratorBackend {
 public:
  GeneratedAudio generate(const Prime& prime, const ArtistProfile& artist,
                          const GenreProfile& genre, std::uint64_t seed) const override {
    return mock_generate(prime, artist, genre, seed);
  }
};

// Runs an external program for each job. The program receives the path of a
// JSON request file ({prime, artist, genre, seed}) as its only argument and
// must print {"song_features": [9 numbers], "audio_ref": "..."} on stdout.
class ExternalCommandGenerator final : public GeneratorBackend {
 public:
  ExternalCommandGenerator(std::string command, std::filesystem::path scratch_dir)
      : command_(std::move(command)), scratch_dir_(std::move(scratch_dir)) {}

  GeneratedAudio generate(const Prime& prime, const ArtistProfile& artist,
                          const GenreProfile& genre, std::uint64_t seed) const override {
    if (command_.empty()) throw Error("no external generator command configured");
    std::filesystem::create_directories(scratch_dir_);
    const auto request_path = scratch_dir_ / ("request-" + hex64(mock_stream_seed(prime, artist, genre, seed)) + ".json");
    {
      std::ofstream req(request_path);
      req << Json{{"prime", prime}, {"artist", artist}, {"genre", genre}, {"seed", seed}}.dump();
    }
    const std::string cmd = command_ + " '" + request_path.string() + "'";
    std::string output;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw Error("failed to start external generator");
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
    const int status = ::pclose(pipe);
    std::filesystem::remove(request_path);
    if (status != 0) throw Error("external generator exited with status " + std::to_string(status));
    const Json j = Json::parse(output, nullptr, false);
    if (j.is_discarded()) throw Error("external generator produced invalid JSON");
    GeneratedAudio out;
    j.at("song_features").get_to(out.song_features);
    j.at("audio_ref").get_to(out.audio_ref);
    return out;
  }

 private:
  std::string command_;
  std::filesystem::path scratch_dir_;
};

// Placeholder audio: a short triad whose root follows the key feature, whose
// pulse rate follows energy and whose level follows loudness. 16-bit mono PCM.
inline std::vector<std::uint8_t> render_placeholder_tone(const FeatureVector& f, double seconds = 4.0,
                                                         int sample_rate = 22050) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  const double key = std::clamp(f[Feature::key], 0.0, 1.0);
  const double root = 220.0 * std::pow(2.0, std::round(key * 11.0) / 12.0);
  const bool major = f[Feature::valence] >= 0.5;
  const std::array<double, 3> freqs = {root, root * std::pow(2.0, (major ? 4.0 : 3.0) / 12.0),
                                       root * std::pow(2.0, 7.0 / 12.0)};
  const double pulse_hz = 1.0 + 4.0 * std::clamp(f[Feature::energy], 0.0, 1.0);
  const double gain = std::pow(10.0, std::clamp(f[Feature::loudness], -60.0, 0.0) / 20.0);
  const auto frames = static_cast<std::uint32_t>(seconds * sample_rate);

  std::vector<std::uint8_t> wav;
  wav.reserve(44 + 2 * frames);
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) wav.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto put16 = [&](std::uint16_t v) {
    wav.push_back(static_cast<std::uint8_t>(v));
    wav.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto tag = [&](const char* s) { wav.insert(wav.end(), s, s + 4); };

  const std::uint32_t data_bytes = 2 * frames;
  tag("RIFF");
  put32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  put32(16);
  put16(1);  // PCM
  put16(1);  // mono
  put32(static_cast<std::uint32_t>(sample_rate));
  put32(static_cast<std::uint32_t>(sample_rate) * 2);
  put16(2);
  put16(16);
  tag("data");
  put32(data_bytes);
  for (std::uint32_t n = 0; n < frames; ++n) {
    const double t = static_cast<double>(n) / sample_rate;
    double s = 0.0;
    for (double fr : freqs) s += std::sin(kTwoPi * fr * t);
    const double envelope = 0.55 + 0.45 * std::cos(kTwoPi * pulse_hz * t);
    const double fade = std::min({1.0, t / 0.05, (seconds - t) / 0.05});
    const double sample = std::clamp(s / 3.0 * envelope * fade * gain * 0.8, -1.0, 1.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(sample * 32767.0))));
  }
  return wav;
}

}  // namespace afm
