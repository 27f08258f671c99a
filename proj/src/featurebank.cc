/*
 * Copyright 2026 The TxV Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "txv/featurebank.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "byte_io.h"
#include "txv/errors.h"
#include "txv/rng.h"

namespace txv {
namespace {

constexpr char kBankMagic[] = "TXVF";
constexpr std::uint32_t kBankVersion = 1;

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string FormatShortest(double v) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

std::string StemName(const std::filesystem::path& path) {
  return path.stem().string();
}

// Random linear map, entries N(0, 1/cols).
Mat64 RandomMap(std::size_t rows, std::size_t cols, Rng& rng) {
  Mat64 m(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& v : m.mutable_values()) v = rng.Normal() * scale;
  return m;
}

Vec64 RandomNormal(std::size_t dim, Rng& rng) {
  Vec64 v(dim);
  for (double& x : v.mutable_values()) x = rng.Normal();
  return v;
}

struct ViewMaps {
  Mat64 signal;  // dim x latent
  Mat64 shared;  // dim x latent, maps the item's shared noise
};

// Generates all views of one modality for one item.
std::vector<Vec64> RenderViews(const std::vector<ViewMaps>& maps,
                               const Vec64& latent, const SynthSpec& spec,
                               Rng& rng) {
  const Vec64 shared_noise = RandomNormal(spec.latent_dim, rng);
  const double a = spec.noise_sigma * std::sqrt(spec.noise_correlation);
  const double b = spec.noise_sigma * std::sqrt(1.0 - spec.noise_correlation);
  std::vector<Vec64> out;
  out.reserve(maps.size());
  for (const ViewMaps& m : maps) {
    Vec64 v(m.signal.rows());
    for (std::size_t r = 0; r < m.signal.rows(); ++r) {
      v[r] = Dot(m.signal.row(r), latent.values()) +
             a * Dot(m.shared.row(r), shared_noise.values()) + b * rng.Normal();
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

FeatureBank::FeatureBank(std::string name, std::size_t dim)
    : name_(std::move(name)), dim_(dim) {
  if (dim_ == 0) throw DimensionError("feature bank '" + name_ + "': dim must be positive");
}

void FeatureBank::Add(std::string id, Vec64 vector) {
  if (vector.dim() != dim_) {
    throw DimensionError("feature bank '" + name_ + "': item '" + id +
                         "' has dim " + std::to_string(vector.dim()) +
                         ", expected " + std::to_string(dim_));
  }
  if (id.size() > kMaxIdBytes) {
    throw DataError("feature bank '" + name_ + "': id longer than 4096 bytes");
  }
  if (index_.contains(id)) {
    throw DataError("feature bank '" + name_ + "': duplicate id '" + id + "'");
  }
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  rows_.push_back(std::move(vector));
}

const Vec64* FeatureBank::Find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &rows_[it->second];
}

const Vec64& FeatureBank::Get(const std::string& id) const {
  const Vec64* v = Find(id);
  if (v == nullptr) {
    throw MissingItemError("feature bank '" + name_ + "' has no item '" + id + "'");
  }
  return *v;
}

void BankSet::Add(FeatureBank bank) {
  if (Contains(bank.name())) {
    throw DataError("duplicate feature bank name '" + bank.name() + "'");
  }
  banks_.push_back(std::move(bank));
}

bool BankSet::Contains(const std::string& name) const {
  for (const auto& b : banks_) {
    if (b.name() == name) return true;
  }
  return false;
}

const FeatureBank& BankSet::Get(const std::string& name) const {
  for (const auto& b : banks_) {
    if (b.name() == name) return b;
  }
  throw MissingItemError("no feature bank named '" + name + "'");
}

std::vector<std::string> BankSet::names() const {
  std::vector<std::string> out;
  for (const auto& b : banks_) out.push_back(b.name());
  return out;
}

Vec64 MeanPool(const FrameFeatureSet& frames) {
  if (frames.frames.empty()) {
    throw EmptyInputError("mean_pool: video '" + frames.video_id + "' has no frames");
  }
  const std::size_t dim = frames.frames.front().dim();
  std::vector<double> sum(dim, 0.0);
  for (const Vec64& f : frames.frames) {
    if (f.dim() != dim) {
      throw DimensionError("mean_pool: frames of video '" + frames.video_id +
                           "' disagree on dim");
    }
    for (std::size_t i = 0; i < dim; ++i) sum[i] += f[i];
  }
  const double n = static_cast<double>(frames.frames.size());
  for (double& v : sum) v /= n;
  return Vec64(std::move(sum));
}

Vec64 ConcatFeatures(const std::vector<const FeatureBank*>& banks,
                     const std::string& id) {
  std::vector<double> out;
  for (const FeatureBank* bank : banks) {
    const auto values = bank->Get(id).values();
    out.insert(out.end(), values.begin(), values.end());
  }
  return Vec64(std::move(out));
}

FeatureBank ConcatBanks(std::string name,
                        const std::vector<const FeatureBank*>& banks) {
  if (banks.empty()) throw ConfigError("concat: no banks given");
  std::size_t dim = 0;
  for (const FeatureBank* b : banks) dim += b->dim();
  FeatureBank out(std::move(name), dim);
  for (const std::string& id : banks.front()->ids()) {
    out.Add(id, ConcatFeatures(banks, id));
  }
  return out;
}

Vec64 QuantizeF32(const Vec64& v) {
  Vec64 out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) {
    out[i] = static_cast<double>(static_cast<float>(v[i]));
  }
  return out;
}

std::vector<std::uint8_t> EncodeBank(const FeatureBank& bank) {
  internal::ByteWriter w;
  w.Bytes(kBankMagic);
  w.U32(kBankVersion);
  w.U32(static_cast<std::uint32_t>(bank.dim()));
  w.U64(bank.size());
  for (const auto& id : bank.ids()) {
    w.U32(static_cast<std::uint32_t>(id.size()));
    w.Bytes(id);
  }
  for (std::size_t i = 0; i < bank.size(); ++i) {
    for (double v : bank.row(i).values()) w.F32(static_cast<float>(v));
  }
  return std::move(w.bytes());
}

FeatureBank DecodeBank(std::span<const std::uint8_t> bytes, std::string name) {
  internal::ByteReader r(bytes);
  if (r.Bytes(4, "magic") != kBankMagic) {
    throw FormatError("bad magic, expected TXVF", 0);
  }
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.U32("version");
  if (version != kBankVersion) {
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  }
  const std::uint64_t dim_at = r.offset();
  const std::uint32_t dim = r.U32("dim");
  if (dim == 0) throw FormatError("dim must be positive", dim_at);
  const std::uint64_t count = r.U64("count");
  std::vector<std::string> ids;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len_at = r.offset();
    const std::uint32_t len = r.U32("id length");
    if (len > kMaxIdBytes) throw FormatError("id longer than 4096 bytes", len_at);
    ids.push_back(r.Bytes(len, "id bytes"));
  }
  if (r.remaining() / dim / 4 < count) {
    throw FormatError("truncated: declared " + std::to_string(count) +
                          " rows but only " +
                          std::to_string(r.remaining() / 4 / dim) + " present",
                      r.offset());
  }
  FeatureBank bank(std::move(name), dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::vector<double> row(dim);
    for (auto& v : row) v = static_cast<double>(r.F32("row values"));
    try {
      bank.Add(std::move(ids[i]), Vec64(std::move(row)));
    } catch (const Error& e) {
      r.Fail(e.what());
    }
  }
  if (r.remaining() != 0) r.Fail("trailing bytes after last row");
  return bank;
}

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void SaveBank(const FeatureBank& bank, const std::filesystem::path& path) {
  WriteFileBytes(path, EncodeBank(bank));
}

FeatureBank LoadBank(const std::filesystem::path& path, std::string name) {
  if (name.empty()) name = StemName(path);
  try {
    return DecodeBank(ReadFileBytes(path), std::move(name));
  } catch (const FormatError& e) {
    throw e.WithContext(path.string());
  }
}

void SaveBankTsv(const FeatureBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (std::size_t i = 0; i < bank.size(); ++i) {
    out << bank.ids()[i] << '\t';
    const auto values = bank.row(i).values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (j > 0) out << ' ';
      out << FormatShortest(values[j]);
    }
    out << '\n';
  }
}

FeatureBank LoadBankTsv(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  if (name.empty()) name = StemName(path);
  std::optional<FeatureBank> bank;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError(path.string() + ": missing TAB", line_no);
    std::vector<double> values;
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      if (*p == ' ') {
        ++p;
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) {
        throw FormatError(path.string() + ": bad float", line_no);
      }
      values.push_back(v);
      p = res.ptr;
    }
    if (values.empty()) throw FormatError(path.string() + ": empty vector", line_no);
    if (!bank) bank.emplace(name, values.size());
    try {
      bank->Add(line.substr(0, tab), Vec64(std::move(values)));
    } catch (const Error& e) {
      throw FormatError(path.string() + ": " + e.what(), line_no);
    }
  }
  if (!bank) throw FormatError(path.string() + ": no items", 0);
  return std::move(*bank);
}

void SavePairs(const PairList& pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const Pair& p : pairs.pairs) {
    out << p.caption_id << '\t' << p.video_id;
    if (!p.caption_text.empty()) out << '\t' << p.caption_text;
    out << '\n';
  }
}

PairList LoadPairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  PairList pairs;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = SplitTabs(line);
    if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
      throw FormatError(path.string() + ": expected caption_id TAB video_id", line_no);
    }
    Pair p{std::move(fields[0]), std::move(fields[1]), ""};
    if (fields.size() >= 3) {
      // Caption text may itself contain tabs.
      p.caption_text = line.substr(p.caption_id.size() + p.video_id.size() + 2);
    }
    pairs.pairs.push_back(std::move(p));
  }
  return pairs;
}

void ValidatePairs(const PairList& pairs, const BankSet& text,
                   const BankSet& video) {
  for (const Pair& p : pairs.pairs) {
    for (const auto& bank : text.banks()) bank.Get(p.caption_id);
    for (const auto& bank : video.banks()) bank.Get(p.video_id);
  }
}

void SynthSpec::Validate() const {
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw ConfigError("synthetic spec: split sizes must be >= 1");
  }
  if (latent_dim < 1) throw ConfigError("synthetic spec: latent_dim must be >= 1");
  if (text_features.empty() || video_features.empty()) {
    throw ConfigError("synthetic spec: need at least one text and one video feature");
  }
  for (const auto* list : {&text_features, &video_features}) {
    std::set<std::string> names;
    for (const auto& f : *list) {
      if (f.name.empty() || f.dim < 1) {
        throw ConfigError("synthetic spec: feature needs a name and dim >= 1");
      }
      if (!names.insert(f.name).second) {
        throw ConfigError("synthetic spec: duplicate feature '" + f.name + "'");
      }
    }
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("synthetic spec: noise_sigma must be >= 0");
  }
  if (!(noise_correlation >= 0.0 && noise_correlation <= 1.0)) {
    throw ConfigError("synthetic spec: noise_correlation must lie in [0, 1]");
  }
  if (captions_per_video < 1) {
    throw ConfigError("synthetic spec: captions_per_video must be >= 1");
  }
}

SynthSpec SynthPreset(const std::string& name) {
  SynthSpec spec;
  spec.video_features = {{"r152", 48}, {"rx101", 48}, {"clip", 32}};
  if (name == "small") {
    spec.text_features = {{"bow", 48}, {"w2v", 32}, {"clip", 32}};
  } else if (name == "e2e") {
    spec.text_features = {{"w2v", 32}, {"clip", 32}};
  } else if (name == "correlated") {
    spec.text_features = {{"w2v", 32}, {"clip", 32}};
    spec.noise_sigma = 0.6;
    spec.noise_correlation = 0.5;
    // A larger test gallery keeps evaluation noise below the variant gap.
    spec.n_test = 200;
  } else {
    throw ConfigError("unknown synthetic preset '" + name + "'");
  }
  return spec;
}

SynthData GenerateSynthetic(const SynthSpec& spec) {
  spec.Validate();
  Rng rng(spec.seed);
  auto make_maps = [&](const std::vector<SynthFeature>& features) {
    std::vector<ViewMaps> maps;
    for (const auto& f : features) {
      Mat64 signal = RandomMap(f.dim, spec.latent_dim, rng);
      Mat64 shared = RandomMap(f.dim, spec.latent_dim, rng);
      maps.push_back({std::move(signal), std::move(shared)});
    }
    return maps;
  };
  const auto text_maps = make_maps(spec.text_features);
  const auto video_maps = make_maps(spec.video_features);

  std::size_t next_caption = 0;
  std::size_t next_video = 0;
  SynthData data;

  auto make_split = [&](std::size_t n_videos, std::size_t n_distractors) {
    std::vector<FeatureBank> text, video;
    for (const auto& f : spec.text_features) text.emplace_back(f.name, f.dim);
    for (const auto& f : spec.video_features) video.emplace_back(f.name, f.dim);
    DataSplit split;
    auto add_video = [&](const Vec64& z) {
      const std::string vid = "v" + std::to_string(next_video++);
      auto views = RenderViews(video_maps, z, spec, rng);
      for (std::size_t l = 0; l < views.size(); ++l) video[l].Add(vid, std::move(views[l]));
      data.latents.emplace(vid, z);
      return vid;
    };
    for (std::size_t n = 0; n < n_videos; ++n) {
      const Vec64 z = RandomNormal(spec.latent_dim, rng);
      const std::string vid = add_video(z);
      for (std::size_t j = 0; j < spec.captions_per_video; ++j) {
        const std::string cid = "c" + std::to_string(next_caption++);
        auto views = RenderViews(text_maps, z, spec, rng);
        for (std::size_t m = 0; m < views.size(); ++m) text[m].Add(cid, std::move(views[m]));
        data.latents.emplace(cid, z);
        split.pairs.pairs.push_back({cid, vid, ""});
      }
    }
    for (std::size_t n = 0; n < n_distractors; ++n) {
      add_video(RandomNormal(spec.latent_dim, rng));
    }
    for (auto& b : text) split.text.Add(std::move(b));
    for (auto& b : video) split.video.Add(std::move(b));
    return split;
  };
  data.train = make_split(spec.n_train, 0);
  data.val = make_split(spec.n_val, spec.distractor_count);
  data.test = make_split(spec.n_test, spec.distractor_count);
  return data;
}

std::vector<std::filesystem::path> SaveSplit(const DataSplit& split,
                                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::ostringstream manifest;
  auto save = [&](const BankSet& banks, const std::string& modality) {
    for (const auto& bank : banks.banks()) {
      const std::string file = modality + "_" + bank.name() + ".txvf";
      SaveBank(bank, dir / file);
      manifest << modality << '\t' << bank.name() << '\t' << file << '\n';
      written.push_back(dir / file);
    }
  };
  save(split.text, "text");
  save(split.video, "video");
  SavePairs(split.pairs, dir / "pairs.tsv");
  written.push_back(dir / "pairs.tsv");
  const std::string m = manifest.str();
  WriteFileBytes(dir / "manifest.tsv",
                 std::span(reinterpret_cast<const std::uint8_t*>(m.data()), m.size()));
  written.push_back(dir / "manifest.tsv");
  return written;
}

DataSplit LoadSplit(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.tsv";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open '" + manifest_path.string() + "' for reading");
  DataSplit split;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    if (fields.size() != 3 || (fields[0] != "text" && fields[0] != "video")) {
      throw FormatError(manifest_path.string() + ": expected modality TAB name TAB file",
                        line_no);
    }
    FeatureBank bank = LoadBank(dir / fields[2], fields[1]);
    (fields[0] == "text" ? split.text : split.video).Add(std::move(bank));
  }
  if (std::filesystem::exists(dir / "pairs.tsv")) {
    split.pairs = LoadPairs(dir / "pairs.tsv");
  }
  ValidatePairs(split.pairs, split.text, split.video);
  return split;
}

}  // namespace txv
