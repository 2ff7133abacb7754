#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lumen/camera.hpp"
#include "lumen/common.hpp"
#include "lumen/hash.hpp"
#include "lumen/image.hpp"
#include "lumen/pfm.hpp"
#include "lumen/ppm.hpp"
#include "lumen/rgbe.hpp"
#include "lumen/rng.hpp"
#include "lumen/tonemap.hpp"

// Training-pair generation. Each pair applies crop -> resize -> flips to an
// HDR source, then produces the degraded input x through a random exposure
// and the virtual camera, and the target y through Reinhard's operator with
// a = 0.18 on the same patch. Both run on luminance and restore color by
// ratio preservation. A manifest records every random draw so a dataset can
// be regenerated bit-identically.

namespace lumen {

struct DatasetConfig {
  int out_size = 512;
  double epsilon = 1e-6;
  double key_a = 0.18;
};

struct PairProvenance {
  std::uint64_t source_index = 0;
  std::string source_id;
  std::uint64_t seed = 0;
  AugmentSpec aug;
  CameraParams cam;
  double v = 0.0;
};

struct TrainingPair {
  LdrImage input;   // x
  LdrImage target;  // y
  PairProvenance prov;
};

inline HdrImage augmented_patch(const HdrImage& source, const AugmentSpec& spec) {
  return flip(crop_resize(source, spec), spec.flip_vertical, spec.flip_horizontal);
}

// x and y from one augmented patch. The draw order (augment spec, then
// camera sample) is part of the manifest contract.
inline TrainingPair make_pair(const HdrImage& source, Rng& rng, const DatasetConfig& cfg) {
  std::uint64_t seed_at_entry = rng.state();
  AugmentSpec spec = sample_augment(rng, source.width, source.height, cfg.out_size);
  CameraSample cam = sample_camera(rng);

  HdrImage patch = augmented_patch(source, spec);
  LuminanceMap l_patch = luminance(patch);
  double g = geometric_mean(l_patch, cfg.epsilon);

  // target: Reinhard with key a on the patch
  LuminanceMap x_y(l_patch.width, l_patch.height);
  double scale_y = cfg.key_a / g;
  for (std::size_t i = 0; i < l_patch.values.size(); ++i)
    x_y.values[i] = scale_y * l_patch.values[i];
  LuminanceMap l_y = reinhard_curve(x_y);

  // input: exposure then camera response
  LuminanceMap x_x(l_patch.width, l_patch.height);
  double dt = 0.18 * std::exp2(cam.v) / g;
  for (std::size_t i = 0; i < l_patch.values.size(); ++i)
    x_x.values[i] = dt * l_patch.values[i];
  LuminanceMap l_x = virtual_camera(x_x, cam.cam);

  TrainingPair pair;
  pair.input = reconstruct_color(patch, l_patch, l_x);
  pair.target = reconstruct_color(patch, l_patch, l_y);
  pair.prov.seed = seed_at_entry;
  pair.prov.aug = spec;
  pair.prov.cam = cam.cam;
  pair.prov.v = cam.v;
  return pair;
}

struct EpochSchedule {
  std::size_t epoch_index = 0;
  std::vector<std::vector<std::size_t>> batches;
};

// Uniform permutation chunked into floor(corpus/batch) full batches; the
// remainder is dropped and rotates into later epochs via fresh permutations.
inline EpochSchedule epoch_schedule(std::size_t corpus_size, std::size_t batch, Rng& rng,
                                    std::size_t epoch_index = 0) {
  if (batch == 0) throw InvalidArgument("epoch_schedule: batch must be positive");
  if (corpus_size < batch)
    throw InvalidArgument(strfmt("epoch_schedule: corpus size %zu < batch %zu", corpus_size,
                                 batch));
  std::vector<std::size_t> perm(corpus_size);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  EpochSchedule schedule;
  schedule.epoch_index = epoch_index;
  std::size_t n_batches = corpus_size / batch;
  schedule.batches.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b)
    schedule.batches.emplace_back(perm.begin() + b * batch, perm.begin() + (b + 1) * batch);
  return schedule;
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestSource {
  std::size_t index = 0;
  std::string path;
  std::uint64_t hash = 0;
};

struct ManifestSkip {
  std::string path;
  std::string reason;
};

struct DatasetManifest {
  std::uint64_t master_seed = 0;
  DatasetConfig cfg;
  std::vector<ManifestSource> sources;
  std::vector<ManifestSkip> skipped;
  std::vector<PairProvenance> pairs;
};

namespace detail {
inline std::string g17(double v) { return strfmt("%.17g", v); }
}  // namespace detail

inline std::string serialize_manifest(const DatasetManifest& m) {
  std::string out;
  out += "lumen-dataset-manifest v1\n";
  out += strfmt("master_seed %llu\n", static_cast<unsigned long long>(m.master_seed));
  out += strfmt("out_size %d\n", m.cfg.out_size);
  out += "epsilon " + detail::g17(m.cfg.epsilon) + "\n";
  out += "key_a " + detail::g17(m.cfg.key_a) + "\n";
  for (const auto& s : m.sources)
    out += strfmt("source %zu %016llx %s\n", s.index,
                  static_cast<unsigned long long>(s.hash), s.path.c_str());
  for (const auto& s : m.skipped)
    out += strfmt("skip %s reason=%s\n", s.path.c_str(), s.reason.c_str());
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    const auto& p = m.pairs[i];
    out += strfmt("pair %zu source=%llu seed=%016llx fraction=%s row=%d col=%d flip_v=%d "
                  "flip_h=%d v=%s eta=%s gamma=%s\n",
                  i, static_cast<unsigned long long>(p.source_index),
                  static_cast<unsigned long long>(p.seed),
                  detail::g17(p.aug.crop_fraction).c_str(), p.aug.crop_row, p.aug.crop_col,
                  p.aug.flip_vertical ? 1 : 0, p.aug.flip_horizontal ? 1 : 0,
                  detail::g17(p.v).c_str(), detail::g17(p.cam.eta).c_str(),
                  detail::g17(p.cam.gamma).c_str());
  }
  return out;
}

inline DatasetManifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "lumen-dataset-manifest v1")
    throw IoError("manifest: missing or unsupported version header");
  DatasetManifest m;
  auto want = [&](bool cond, const char* what) {
    if (!cond) throw IoError(strfmt("manifest: malformed %s record", what));
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "master_seed") {
      want(static_cast<bool>(ls >> m.master_seed), "master_seed");
    } else if (key == "out_size") {
      want(static_cast<bool>(ls >> m.cfg.out_size), "out_size");
    } else if (key == "epsilon") {
      want(static_cast<bool>(ls >> m.cfg.epsilon), "epsilon");
    } else if (key == "key_a") {
      want(static_cast<bool>(ls >> m.cfg.key_a), "key_a");
    } else if (key == "source") {
      ManifestSource s;
      std::string hash_hex;
      want(static_cast<bool>(ls >> s.index >> hash_hex), "source");
      s.hash = std::stoull(hash_hex, nullptr, 16);
      std::getline(ls, s.path);
      if (!s.path.empty() && s.path.front() == ' ') s.path.erase(0, 1);
      want(!s.path.empty(), "source path");
      m.sources.push_back(std::move(s));
    } else if (key == "skip") {
      ManifestSkip s;
      std::string tok;
      want(static_cast<bool>(ls >> s.path), "skip");
      while (ls >> tok)
        if (tok.rfind("reason=", 0) == 0) s.reason = tok.substr(7);
      m.skipped.push_back(std::move(s));
    } else if (key == "pair") {
      std::size_t idx = 0;
      want(static_cast<bool>(ls >> idx), "pair");
      PairProvenance p;
      std::string tok;
      while (ls >> tok) {
        auto eq = tok.find('=');
        want(eq != std::string::npos, "pair field");
        std::string k = tok.substr(0, eq);
        std::string v = tok.substr(eq + 1);
        if (k == "source")
          p.source_index = std::stoull(v);
        else if (k == "seed")
          p.seed = std::stoull(v, nullptr, 16);
        else if (k == "fraction")
          p.aug.crop_fraction = std::stod(v);
        else if (k == "row")
          p.aug.crop_row = std::stoi(v);
        else if (k == "col")
          p.aug.crop_col = std::stoi(v);
        else if (k == "flip_v")
          p.aug.flip_vertical = v == "1";
        else if (k == "flip_h")
          p.aug.flip_horizontal = v == "1";
        else if (k == "v")
          p.v = std::stod(v);
        else if (k == "eta")
          p.cam.eta = std::stod(v);
        else if (k == "gamma")
          p.cam.gamma = std::stod(v);
      }
      want(idx == m.pairs.size(), "pair ordering");
      m.pairs.push_back(std::move(p));
    }
    // unknown keys are ignored for forward compatibility
  }
  for (auto& p : m.pairs) p.aug.out_size = m.cfg.out_size;
  return m;
}

// ---------------------------------------------------------------------------
// Generation and replay

inline HdrImage read_hdr_any(const std::filesystem::path& path) {
  Bytes bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == '#' && bytes[1] == '?') return read_radiance_hdr(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == 'F' || bytes[1] == 'f'))
    return read_pfm(bytes);
  throw IoError(strfmt("'%s': not a Radiance or PFM image", path.string().c_str()));
}

struct GenerateResult {
  DatasetManifest manifest;
  std::size_t pairs_written = 0;
};

namespace detail {

inline void write_pair_files(const std::filesystem::path& out_dir, std::size_t index,
                             const TrainingPair& pair) {
  write_file(out_dir / strfmt("%zu_x.pfm", index), write_pfm(pair.input));
  write_file(out_dir / strfmt("%zu_y.pfm", index), write_pfm(pair.target));
}

}  // namespace detail

// Materializes count_per_image pairs per readable source under
// out_dir/pairs/, plus out_dir/manifest.txt. Unreadable sources are skipped
// and recorded. Per-pair seeds derive from (master_seed, source index, k),
// so generation order and --jobs do not affect the output bytes.
inline GenerateResult generate_dataset(const std::vector<std::string>& corpus,
                                       int count_per_image, const DatasetConfig& cfg,
                                       std::uint64_t master_seed,
                                       const std::filesystem::path& out_dir, int jobs = 1,
                                       std::ostream* log = nullptr) {
  if (count_per_image < 1) throw InvalidArgument("count_per_image must be >= 1");
  std::filesystem::create_directories(out_dir / "pairs");

  GenerateResult result;
  result.manifest.master_seed = master_seed;
  result.manifest.cfg = cfg;

  struct Loaded {
    std::size_t corpus_index;
    std::string path;
    HdrImage image;
  };
  std::vector<Loaded> sources;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      Loaded l{i, corpus[i], read_hdr_any(corpus[i])};
      Bytes raw = read_file(corpus[i]);
      result.manifest.sources.push_back({i, corpus[i], fnv1a64(raw)});
      sources.push_back(std::move(l));
    } catch (const Error& e) {
      if (log) *log << "warning: skipping " << corpus[i] << ": " << e.what() << "\n";
      result.manifest.skipped.push_back({corpus[i], e.what()});
    }
  }
  if (sources.empty()) throw InvalidArgument("no readable HDR images in corpus");

  std::size_t total = sources.size() * static_cast<std::size_t>(count_per_image);
  result.manifest.pairs.resize(total);

  auto generate_one = [&](std::size_t flat) {
    const Loaded& src = sources[flat / count_per_image];
    std::size_t k = flat % count_per_image;
    std::uint64_t seed = derive_seed(master_seed, {seed_tag::kPair, src.corpus_index, k});
    Rng rng(seed);
    TrainingPair pair = make_pair(src.image, rng, cfg);
    pair.prov.source_index = src.corpus_index;
    pair.prov.source_id = src.path;
    detail::write_pair_files(out_dir / "pairs", flat, pair);
    result.manifest.pairs[flat] = pair.prov;
  };

  if (jobs <= 1) {
    for (std::size_t flat = 0; flat < total; ++flat) generate_one(flat);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        std::size_t flat = next.fetch_add(1);
        if (flat >= total) return;
        generate_one(flat);
      }
    };
    std::vector<std::future<void>> pool;
    for (int j = 0; j < jobs; ++j) pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }

  write_file(out_dir / "manifest.txt", serialize_manifest(result.manifest));
  result.pairs_written = total;
  return result;
}

// Regenerates every pair recorded in a manifest, verifying source content
// hashes first. Output bytes are identical to the original generation.
inline std::size_t replay_dataset(const std::filesystem::path& manifest_path,
                                  const std::filesystem::path& out_dir) {
  Bytes raw = read_file(manifest_path);
  DatasetManifest m = parse_manifest(std::string(raw.begin(), raw.end()));
  std::filesystem::create_directories(out_dir / "pairs");

  std::vector<std::optional<HdrImage>> by_index;
  for (const auto& s : m.sources) {
    Bytes bytes = read_file(s.path);
    std::uint64_t h = fnv1a64(bytes);
    if (h != s.hash)
      throw IoError(strfmt("manifest replay: hash mismatch for '%s' (stored %016llx, "
                           "actual %016llx)",
                           s.path.c_str(), static_cast<unsigned long long>(s.hash),
                           static_cast<unsigned long long>(h)));
    if (by_index.size() <= s.index) by_index.resize(s.index + 1);
    by_index[s.index] = read_hdr_any(s.path);
  }

  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    const auto& prov = m.pairs[i];
    if (prov.source_index >= by_index.size() || !by_index[prov.source_index])
      throw IoError(strfmt("manifest replay: pair %zu references missing source %llu", i,
                           static_cast<unsigned long long>(prov.source_index)));
    Rng rng(prov.seed);
    TrainingPair pair = make_pair(*by_index[prov.source_index], rng, m.cfg);
    detail::write_pair_files(out_dir / "pairs", i, pair);
  }
  write_file(out_dir / "manifest.txt", serialize_manifest(m));
  return m.pairs.size();
}

}  // namespace lumen
