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

#include "txv/cli.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "txv/errors.h"
#include "txv/evalmetrics.h"
#include "txv/featurebank.h"
#include "txv/model.h"
#include "txv/retrieval.h"
#include "txv/rng.h"
#include "txv/training.h"

namespace txv::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kDefaultConfig[] = R"json({
  "seed": 1,
  "data": {
    "synth": {
      "preset": "small",
      "n_train": 200,
      "n_val": 50,
      "n_test": 50,
      "latent_dim": 16,
      "text_features": [],
      "video_features": [],
      "noise_sigma": 0.05,
      "noise_correlation": 0.0,
      "distractor_count": 20,
      "captions_per_video": 1
    },
    "train_dir": "",
    "val_dir": "",
    "test_dir": ""
  },
  "model": {
    "text_encoders": [],
    "video_features": [],
    "joint_dim": 64
  },
  "train": {
    "optimizer": "adam",
    "lr": 0.001,
    "margin": 0.2,
    "dropout": 0.2,
    "batch_size": 32,
    "max_epochs": 30,
    "lr_decay_per_epoch": 0.01,
    "plateau_patience": 3,
    "plateau_factor": 0.5
  },
  "ensemble": {
    "enabled": false,
    "lr_scale": 1.0
  },
  "retrieve": {
    "checkpoints": [],
    "query_dir": "",
    "video_dir": "",
    "output": "rankings.tsv"
  },
  "dsinf": {
    "strategy": "none",
    "n_background": 60,
    "background_file": "",
    "background_dir": "",
    "checkpoint": "",
    "video_dir": "",
    "input": "",
    "temperature": 1.0,
    "fuse_then_rescore": false
  },
  "fuse": {
    "inputs": [],
    "output": "fused.tsv"
  },
  "eval": {
    "ks": [1, 5, 10],
    "rankings": "",
    "ground_truth": "",
    "output_tsv": "report.tsv",
    "output_json": "report.json"
  }
})json";

// Config type check: user values must match the default's JSON type.
bool SameKind(const json& schema, const json& value) {
  if (schema.is_number_unsigned()) return value.is_number_unsigned();
  if (schema.is_number()) return value.is_number();
  if (schema.is_string()) return value.is_string();
  if (schema.is_boolean()) return value.is_boolean();
  if (schema.is_array()) return value.is_array();
  if (schema.is_object()) return value.is_object();
  return false;
}

void Validate(const json& schema, const json& value, const std::string& path) {
  for (const auto& [key, v] : value.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    const json& s = schema.at(key);
    if (!SameKind(s, v)) {
      throw ConfigError("config key '" + here + "' must be of type " +
                        std::string(s.is_number_unsigned() ? "unsigned integer" : s.type_name()));
    }
    if (s.is_object()) Validate(s, v, here);
  }
}

json ParseLeaf(const json& schema, const std::string& key, const std::string& text) {
  try {
    if (schema.is_number_unsigned()) {
      if (text.empty() || text[0] == '-') throw std::invalid_argument("negative");
      std::size_t used = 0;
      const auto v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return v;
    }
    if (schema.is_number()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return v;
    }
    if (schema.is_boolean()) {
      if (text == "true") return true;
      if (text == "false") return false;
      throw std::invalid_argument("bool");
    }
    if (schema.is_string()) return text;
    return json::parse(text);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse value '" + text + "' for key '" + key + "'");
  }
}

void ApplyOverride(json& user, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const json* schema = &DefaultConfig();
  json* target = &user;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (!schema->is_object() || !schema->contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    schema = &schema->at(part);
    if (dot == std::string::npos) {
      (*target)[part] = ParseLeaf(*schema, key, assignment.substr(eq + 1));
      return;
    }
    if (!target->contains(part)) (*target)[part] = json::object();
    target = &(*target)[part];
    start = dot + 1;
  }
}

const json& At(const json& cfg, const char* a, const char* b) { return cfg.at(a).at(b); }
std::string Text(const json& cfg, const char* a, const char* b) {
  return At(cfg, a, b).get<std::string>();
}

struct Context {
  ExperimentConfig config;
  fs::path out_dir;
  std::size_t threads = 1;
  std::uint64_t seed = 1;
  std::vector<std::string> positional;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  const json& cfg() const { return config.effective; }
  std::ostream& log() const { return *err; }
};

void WriteText(const fs::path& path, const std::string& text) {
  WriteFileBytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                 text.size()));
}

std::string Num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

SynthSpec SynthFromConfig(const Context& ctx) {
  const json& synth = At(ctx.cfg(), "data", "synth");
  SynthSpec spec = SynthPreset(synth.at("preset").get<std::string>());
  json user = json::object();
  if (ctx.config.user.contains("data") && ctx.config.user["data"].contains("synth")) {
    user = ctx.config.user["data"]["synth"];
  }
  auto features = [](const json& list) {
    std::vector<SynthFeature> out;
    for (const auto& f : list) {
      if (!f.is_object() || !f.contains("name") || !f.contains("dim")) {
        throw ConfigError("synthetic features need {\"name\", \"dim\"} entries");
      }
      out.push_back({f.at("name").get<std::string>(), f.at("dim").get<std::size_t>()});
    }
    return out;
  };
  try {
    if (user.contains("n_train")) spec.n_train = user["n_train"].get<std::size_t>();
    if (user.contains("n_val")) spec.n_val = user["n_val"].get<std::size_t>();
    if (user.contains("n_test")) spec.n_test = user["n_test"].get<std::size_t>();
    if (user.contains("latent_dim")) spec.latent_dim = user["latent_dim"].get<std::size_t>();
    if (user.contains("text_features")) spec.text_features = features(user["text_features"]);
    if (user.contains("video_features")) spec.video_features = features(user["video_features"]);
    if (user.contains("noise_sigma")) spec.noise_sigma = user["noise_sigma"].get<double>();
    if (user.contains("noise_correlation")) {
      spec.noise_correlation = user["noise_correlation"].get<double>();
    }
    if (user.contains("distractor_count")) {
      spec.distractor_count = user["distractor_count"].get<std::size_t>();
    }
    if (user.contains("captions_per_video")) {
      spec.captions_per_video = user["captions_per_video"].get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("data.synth: ") + e.what());
  }
  spec.seed = ctx.seed;
  spec.Validate();
  return spec;
}

struct Dataset {
  DataSplit train;
  DataSplit val;
  DataSplit test;
};

Dataset LoadData(const Context& ctx, bool need_test) {
  const std::string train_dir = Text(ctx.cfg(), "data", "train_dir");
  if (train_dir.empty()) {
    SynthData synth = GenerateSynthetic(SynthFromConfig(ctx));
    ctx.log() << "data: synthetic (" << synth.train.pairs.size() << " train / "
              << synth.val.pairs.size() << " val / " << synth.test.pairs.size()
              << " test pairs)\n";
    return {std::move(synth.train), std::move(synth.val), std::move(synth.test)};
  }
  const std::string val_dir = Text(ctx.cfg(), "data", "val_dir");
  if (val_dir.empty()) throw ConfigError("data.val_dir is required with data.train_dir");
  Dataset data{LoadSplit(train_dir), LoadSplit(val_dir), {}};
  const std::string test_dir = Text(ctx.cfg(), "data", "test_dir");
  if (need_test) {
    if (test_dir.empty()) throw ConfigError("data.test_dir is required for this command");
    data.test = LoadSplit(test_dir);
  }
  return data;
}

ModelConfig ModelFromConfig(const Context& ctx, const DataSplit& split) {
  const json& m = ctx.cfg().at("model");
  std::vector<TextEncoderSpec> encoders;
  try {
    for (const auto& e : m.at("text_encoders")) {
      TextEncoderSpec spec;
      spec.kind = ParseEncoderKind(e.at("kind").get<std::string>());
      spec.features = e.at("features").get<std::vector<std::string>>();
      spec.hidden_dim = e.value("hidden_dim", std::size_t{0});
      for (const auto& [key, v] : e.items()) {
        if (key != "kind" && key != "features" && key != "hidden_dim") {
          throw ConfigError("unknown text encoder key '" + key + "'");
        }
      }
      encoders.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model.text_encoders: ") + e.what());
  }
  if (encoders.empty()) {
    for (const auto& name : split.text.names()) encoders.push_back(TextEncoderSpec::Identity(name));
  }
  auto videos = m.at("video_features").get<std::vector<std::string>>();
  if (videos.empty()) videos = split.video.names();
  return ModelConfig::FromBanks(std::move(encoders), std::move(videos),
                                m.at("joint_dim").get<std::size_t>(), split.text, split.video);
}

TrainConfig TrainFromConfig(const Context& ctx) {
  const json& t = ctx.cfg().at("train");
  TrainConfig c;
  c.optimizer = ParseOptimizer(t.at("optimizer").get<std::string>());
  c.lr = t.at("lr").get<double>();
  c.margin = t.at("margin").get<double>();
  c.dropout = t.at("dropout").get<double>();
  c.batch_size = t.at("batch_size").get<std::size_t>();
  c.max_epochs = t.at("max_epochs").get<std::size_t>();
  c.lr_decay_per_epoch = t.at("lr_decay_per_epoch").get<double>();
  c.plateau_patience = t.at("plateau_patience").get<std::size_t>();
  c.plateau_factor = t.at("plateau_factor").get<double>();
  c.seed = ctx.seed;
  c.Validate();
  return c;
}

void PrintPaths(const Context& ctx, const std::vector<fs::path>& paths) {
  for (const auto& p : paths) *ctx.out << p.string() << '\n';
}

int CmdGenSynth(Context& ctx) {
  const SynthData data = GenerateSynthetic(SynthFromConfig(ctx));
  std::vector<fs::path> written;
  for (const auto& [name, split] :
       {std::pair{"train", &data.train}, {"val", &data.val}, {"test", &data.test}}) {
    const auto files = SaveSplit(*split, ctx.out_dir / name);
    written.insert(written.end(), files.begin(), files.end());
  }
  PrintPaths(ctx, written);
  return 0;
}

int CmdTrainEnsemble(Context& ctx) {
  const Dataset data = LoadData(ctx, false);
  const ModelConfig model_config = ModelFromConfig(ctx, data.train);
  EnsembleConfig ensemble{TrainFromConfig(ctx),
                          At(ctx.cfg(), "ensemble", "lr_scale").get<double>()};
  fs::create_directories(ctx.out_dir);
  const auto members = TrainEnsemble(model_config, data.train, data.val, ensemble,
                                     std::min<std::size_t>(ctx.threads, 6));
  std::string report = "member\tstatus\tbest_epoch\tbest_val_map\terror\n";
  std::vector<fs::path> written;
  std::optional<Error> failure;
  for (const auto& m : members) {
    if (m.result) {
      const fs::path ckpt = ctx.out_dir / (m.tag + ".txvm");
      SaveCheckpoint(m.result->model, ckpt);
      WriteText(ctx.out_dir / (m.tag + ".history.tsv"), m.result->history.ToTsv());
      written.push_back(ckpt);
      report += m.tag + "\tok\t" + std::to_string(m.result->best_epoch) + "\t" +
                Num(m.result->best_val_map) + "\t\n";
      ctx.log() << "member " << m.tag << ": best val mAP " << Num(m.result->best_val_map)
                << " at epoch " << m.result->best_epoch << '\n';
    } else {
      report += m.tag + "\tfailed\t\t\t" + m.error + "\n";
      ctx.log() << "member " << m.tag << " failed: " << m.error << '\n';
      if (!failure) failure.emplace(m.error_category, m.error);
    }
  }
  WriteText(ctx.out_dir / "ensemble_report.tsv", report);
  written.push_back(ctx.out_dir / "ensemble_report.tsv");
  PrintPaths(ctx, written);
  if (failure) throw *failure;
  return 0;
}

int CmdTrain(Context& ctx) {
  if (At(ctx.cfg(), "ensemble", "enabled").get<bool>()) return CmdTrainEnsemble(ctx);
  const Dataset data = LoadData(ctx, false);
  const ModelConfig model_config = ModelFromConfig(ctx, data.train);
  const TrainConfig config = TrainFromConfig(ctx);
  TrainResult result = Train(TxVModel::Init(model_config, ctx.seed), data.train, data.val, config);
  for (const auto& e : result.history.epochs) {
    ctx.log() << "epoch " << e.epoch << " loss " << Num(e.train_loss) << " val_map "
              << Num(e.val_map) << " lr " << Num(e.lr) << '\n';
  }
  fs::create_directories(ctx.out_dir);
  SaveCheckpoint(result.model, ctx.out_dir / "model.txvm");
  WriteText(ctx.out_dir / "history.tsv", result.history.ToTsv());
  PrintPaths(ctx, {ctx.out_dir / "model.txvm", ctx.out_dir / "history.tsv"});
  return 0;
}

// Parses "none", "random-captions", "random-captions(N)", "provided-file".
struct Strategy {
  enum Kind { kNone, kRandomCaptions, kProvidedFile } kind = kNone;
  std::size_t n = 0;
};

Strategy ParseStrategy(const Context& ctx) {
  const std::string s = Text(ctx.cfg(), "dsinf", "strategy");
  Strategy out;
  out.n = At(ctx.cfg(), "dsinf", "n_background").get<std::size_t>();
  if (s == "none") return out;
  if (s == "provided-file") {
    out.kind = Strategy::kProvidedFile;
    return out;
  }
  const std::string prefix = "random-captions";
  if (s.rfind(prefix, 0) == 0) {
    out.kind = Strategy::kRandomCaptions;
    const std::string rest = s.substr(prefix.size());
    if (rest.empty()) return out;
    if (rest.size() > 2 && rest.front() == '(' && rest.back() == ')') {
      try {
        std::size_t used = 0;
        out.n = std::stoul(rest.substr(1, rest.size() - 2), &used);
        if (used == rest.size() - 2) return out;
      } catch (const std::exception&) {
      }
    }
  }
  throw ConfigError("unknown dsinf strategy '" + s +
                    "' (expected none, random-captions(n) or provided-file)");
}

// Reorders a background's columns to `gallery`; the id sets must match.
BackgroundSet AlignBackground(BackgroundSet bg, const std::vector<std::string>& gallery) {
  std::map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < bg.video_ids.size(); ++j) column[bg.video_ids[j]] = j;
  const std::set<std::string> wanted(gallery.begin(), gallery.end());
  if (column.size() != bg.video_ids.size() || wanted.size() != gallery.size() ||
      column.size() != wanted.size() ||
      !std::all_of(gallery.begin(), gallery.end(),
                   [&](const std::string& id) { return column.contains(id); })) {
    throw DataError("background set covers a different video universe (" +
                    std::to_string(bg.video_ids.size()) + " videos) than the ranking (" +
                    std::to_string(gallery.size()) + " videos)");
  }
  Mat64 scores(bg.scores.rows(), gallery.size());
  for (std::size_t c = 0; c < bg.scores.rows(); ++c) {
    for (std::size_t j = 0; j < gallery.size(); ++j) scores(c, j) = bg.scores(c, column.at(gallery[j]));
  }
  bg.scores = std::move(scores);
  bg.video_ids = gallery;
  return bg;
}

// Background for `model` over `gallery`, or nullopt for strategy none.
std::optional<BackgroundSet> MakeBackground(const Context& ctx, const Strategy& strategy,
                                            const TxVModel* model, const BankSet* video,
                                            const std::vector<std::string>& gallery,
                                            const fs::path& cache_path) {
  switch (strategy.kind) {
    case Strategy::kNone:
      return std::nullopt;
    case Strategy::kProvidedFile: {
      const std::string file = Text(ctx.cfg(), "dsinf", "background_file");
      if (file.empty()) throw ConfigError("dsinf.background_file is required for provided-file");
      return AlignBackground(LoadBackground(file), gallery);
    }
    case Strategy::kRandomCaptions: {
      const std::string dir = Text(ctx.cfg(), "dsinf", "background_dir");
      if (dir.empty()) throw ConfigError("dsinf.background_dir is required for random-captions");
      if (model == nullptr || video == nullptr) {
        throw ConfigError("random-captions needs a checkpoint and a video gallery");
      }
      const DataSplit pool = LoadSplit(dir);
      std::vector<std::string> candidates = QueryIds(pool.pairs);
      if (candidates.empty()) candidates = pool.text.banks().front().ids();
      const auto chosen = SampleIds(candidates, strategy.n, DeriveSeed(ctx.seed, 7));
      BackgroundSet bg = BuildBackground(*model, pool.text, chosen, *video, gallery, ctx.threads);
      SaveBackground(bg, cache_path);
      ctx.log() << "dsinf: " << chosen.size() << " background captions, cached at "
                << cache_path.string() << '\n';
      return bg;
    }
  }
  return std::nullopt;
}

std::vector<std::string> QueriesOf(const DataSplit& split) {
  auto ids = QueryIds(split.pairs);
  if (ids.empty()) {
    if (split.text.empty()) throw ConfigError("query directory has no text banks");
    ids = split.text.banks().front().ids();
  }
  return ids;
}

int CmdRetrieve(Context& ctx) {
  auto checkpoints = At(ctx.cfg(), "retrieve", "checkpoints").get<std::vector<std::string>>();
  checkpoints.insert(checkpoints.end(), ctx.positional.begin(), ctx.positional.end());
  if (checkpoints.empty()) throw ConfigError("retrieve needs at least one checkpoint");
  const std::string query_dir = Text(ctx.cfg(), "retrieve", "query_dir");
  const std::string video_dir = Text(ctx.cfg(), "retrieve", "video_dir");
  if (query_dir.empty() || video_dir.empty()) {
    throw ConfigError("retrieve.query_dir and retrieve.video_dir are required");
  }
  const DataSplit queries_split = LoadSplit(query_dir);
  const DataSplit video_split = video_dir == query_dir ? queries_split : LoadSplit(video_dir);
  const auto queries = QueriesOf(queries_split);
  const auto gallery = GalleryIds(video_split.video);
  const Strategy strategy = ParseStrategy(ctx);
  const double temperature = At(ctx.cfg(), "dsinf", "temperature").get<double>();
  const bool fuse_then_rescore = At(ctx.cfg(), "dsinf", "fuse_then_rescore").get<bool>();
  fs::create_directories(ctx.out_dir);

  std::vector<Mat64> member_scores;
  std::vector<std::optional<BackgroundSet>> member_bg;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const TxVModel model = LoadCheckpoint(checkpoints[i]);
    member_scores.push_back(SimilarityMatrix(model, queries_split.text, queries,
                                             video_split.video, gallery, ctx.threads));
    const fs::path cache = ctx.out_dir / (checkpoints.size() == 1
                                              ? std::string("background.txvf")
                                              : "background_" + std::to_string(i) + ".txvf");
    member_bg.push_back(MakeBackground(ctx, strategy, &model, &video_split.video, gallery, cache));
  }

  std::vector<RankedList> result;
  if (checkpoints.size() > 1 && fuse_then_rescore) {
    // Score-level average of the members, then one rescoring pass.
    Mat64 mean(queries.size(), gallery.size());
    for (const auto& s : member_scores) {
      for (std::size_t k = 0; k < mean.values().size(); ++k) mean.mutable_values()[k] += s.values()[k];
    }
    for (double& v : mean.mutable_values()) v /= static_cast<double>(member_scores.size());
    if (member_bg.front()) {
      BackgroundSet avg = *member_bg.front();
      for (std::size_t m = 1; m < member_bg.size(); ++m) {
        for (std::size_t k = 0; k < avg.scores.values().size(); ++k) {
          avg.scores.mutable_values()[k] += member_bg[m]->scores.values()[k];
        }
      }
      for (double& v : avg.scores.mutable_values()) v /= static_cast<double>(member_bg.size());
      mean = DsInfRescoreMatrix(mean, avg, temperature);
    }
    result = RankMatrix(queries, gallery, mean);
  } else {
    std::vector<std::vector<RankedList>> per_member;
    for (std::size_t m = 0; m < member_scores.size(); ++m) {
      const Mat64 scores = member_bg[m] ? DsInfRescoreMatrix(member_scores[m], *member_bg[m], temperature)
                                        : member_scores[m];
      per_member.push_back(RankMatrix(queries, gallery, scores));
    }
    if (per_member.size() == 1) {
      result = std::move(per_member.front());
    } else {
      for (std::size_t q = 0; q < queries.size(); ++q) {
        std::vector<RankedList> lists;
        for (const auto& member : per_member) lists.push_back(member[q]);
        result.push_back(FuseRanks(lists));
      }
    }
  }
  const fs::path output = ctx.out_dir / Text(ctx.cfg(), "retrieve", "output");
  WriteRankings(result, output);
  PrintPaths(ctx, {output});
  return 0;
}

int CmdRescore(Context& ctx) {
  std::string input = Text(ctx.cfg(), "dsinf", "input");
  if (!ctx.positional.empty()) input = ctx.positional.front();
  if (input.empty()) throw ConfigError("rescore needs an input ranking TSV (dsinf.input)");
  const Strategy strategy = ParseStrategy(ctx);
  const auto lists = ReadRankings(input);
  if (lists.empty()) throw DataError("'" + input + "' holds no rankings");
  fs::create_directories(ctx.out_dir);

  std::vector<std::string> gallery = lists.front().item_ids();
  std::sort(gallery.begin(), gallery.end());
  std::optional<TxVModel> model;
  std::optional<DataSplit> video_split;
  if (strategy.kind == Strategy::kRandomCaptions) {
    const std::string ckpt = Text(ctx.cfg(), "dsinf", "checkpoint");
    const std::string video_dir = Text(ctx.cfg(), "dsinf", "video_dir");
    if (ckpt.empty() || video_dir.empty()) {
      throw ConfigError("random-captions needs dsinf.checkpoint and dsinf.video_dir");
    }
    model = LoadCheckpoint(ckpt);
    video_split = LoadSplit(video_dir);
  }
  const auto background =
      MakeBackground(ctx, strategy, model ? &*model : nullptr,
                     video_split ? &video_split->video : nullptr, gallery,
                     ctx.out_dir / "background.txvf");
  const double temperature = At(ctx.cfg(), "dsinf", "temperature").get<double>();

  std::vector<RankedList> revised;
  std::string delta = "query_id\ttop1_before\ttop1_after\tmoved_items\n";
  for (const auto& list : lists) {
    if (!background) {
      revised.push_back(list);
    } else {
      if (list.ascending) {
        throw DataError("query '" + list.query_id + "' holds fused mean ranks, not scores");
      }
      std::map<std::string, double> scores;
      for (const auto& e : list.entries) scores[e.item_id] = e.score;
      if (scores.size() != gallery.size() ||
          !std::all_of(gallery.begin(), gallery.end(),
                       [&](const std::string& id) { return scores.contains(id); })) {
        throw DataError("query '" + list.query_id +
                        "' ranks a different video universe than the background set");
      }
      std::vector<double> y;
      for (const auto& id : background->video_ids) y.push_back(scores.at(id));
      const Vec64 revised_scores = DsInfRescore(y, *background, temperature);
      revised.push_back(Rank(list.query_id, background->video_ids, revised_scores.values()));
    }
    const RankedList& after = revised.back();
    std::size_t moved = 0;
    for (std::size_t r = 0; r < list.size(); ++r) {
      if (after.entries[r].item_id != list.entries[r].item_id) ++moved;
    }
    delta += list.query_id + "\t" + list.entries.front().item_id + "\t" +
             after.entries.front().item_id + "\t" + std::to_string(moved) + "\n";
  }
  WriteRankings(revised, ctx.out_dir / "rescored.tsv");
  WriteText(ctx.out_dir / "rescore_delta.tsv", delta);
  PrintPaths(ctx, {ctx.out_dir / "rescored.tsv", ctx.out_dir / "rescore_delta.tsv"});
  return 0;
}

int CmdFuse(Context& ctx) {
  auto inputs = At(ctx.cfg(), "fuse", "inputs").get<std::vector<std::string>>();
  inputs.insert(inputs.end(), ctx.positional.begin(), ctx.positional.end());
  if (inputs.empty()) throw ConfigError("fuse needs at least one ranking TSV");
  std::vector<std::map<std::string, RankedList>> files;
  std::vector<std::string> order;
  for (std::size_t f = 0; f < inputs.size(); ++f) {
    std::map<std::string, RankedList> by_query;
    for (auto& list : ReadRankings(inputs[f])) {
      if (f == 0) order.push_back(list.query_id);
      by_query.emplace(list.query_id, std::move(list));
    }
    if (f > 0 && by_query.size() != files.front().size()) {
      throw FusionError("'" + inputs[f] + "' covers " + std::to_string(by_query.size()) +
                        " queries, '" + inputs.front() + "' covers " +
                        std::to_string(files.front().size()));
    }
    files.push_back(std::move(by_query));
  }
  std::vector<RankedList> fused;
  for (const auto& query : order) {
    std::vector<RankedList> lists;
    for (std::size_t f = 0; f < files.size(); ++f) {
      const auto it = files[f].find(query);
      if (it == files[f].end()) {
        throw FusionError("'" + inputs[f] + "' has no ranking for query '" + query + "'");
      }
      lists.push_back(it->second);
    }
    try {
      fused.push_back(FuseRanks(lists));
    } catch (const FusionError& e) {
      throw FusionError(std::string(e.what()) + " [inputs in order: " + inputs.front() + ", ...]");
    }
  }
  const fs::path output = ctx.out_dir / Text(ctx.cfg(), "fuse", "output");
  fs::create_directories(ctx.out_dir);
  WriteRankings(fused, output);
  PrintPaths(ctx, {output});
  return 0;
}

int CmdEval(Context& ctx) {
  std::string rankings = Text(ctx.cfg(), "eval", "rankings");
  std::string truth = Text(ctx.cfg(), "eval", "ground_truth");
  if (ctx.positional.size() >= 1) rankings = ctx.positional[0];
  if (ctx.positional.size() >= 2) truth = ctx.positional[1];
  if (rankings.empty() || truth.empty()) {
    throw ConfigError("eval needs eval.rankings and eval.ground_truth");
  }
  const auto ks = At(ctx.cfg(), "eval", "ks").get<std::vector<std::size_t>>();
  const MetricReport report =
      Evaluate(ReadRankings(rankings), GroundTruthFromPairs(LoadPairs(truth)), ks);
  fs::create_directories(ctx.out_dir);
  const fs::path tsv = ctx.out_dir / Text(ctx.cfg(), "eval", "output_tsv");
  const fs::path js = ctx.out_dir / Text(ctx.cfg(), "eval", "output_json");
  WriteText(tsv, report.ToTsv());
  WriteText(js, report.ToJson());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    ctx.log() << "R@" << ks[i] << " " << Num(report.recall[i]) << '\n';
  }
  ctx.log() << "MedR " << Num(report.median_rank) << " mAP " << Num(report.mean_ap) << '\n';
  PrintPaths(ctx, {tsv, js});
  return 0;
}

DataSplit WithConcatVideo(const DataSplit& split) {
  DataSplit out = split;
  std::vector<const FeatureBank*> banks;
  for (const auto& b : split.video.banks()) banks.push_back(&b);
  out.video.Add(ConcatBanks("concat_video", banks));
  return out;
}

int CmdAblate(Context& ctx) {
  const Dataset data = LoadData(ctx, true);
  const DataSplit train = WithConcatVideo(data.train);
  const DataSplit val = WithConcatVideo(data.val);
  const DataSplit test = WithConcatVideo(data.test);
  const TrainConfig config = TrainFromConfig(ctx);
  const std::size_t d = At(ctx.cfg(), "model", "joint_dim").get<std::size_t>();
  const auto text_names = data.train.text.names();
  const auto video_names = data.train.video.names();

  std::vector<TextEncoderSpec> per_text;
  for (const auto& n : text_names) per_text.push_back(TextEncoderSpec::Identity(n));
  struct Variant {
    std::string name;
    std::vector<TextEncoderSpec> text;
    std::vector<std::string> video;
  };
  const std::vector<Variant> variants = {
      {"concat-single-space", {TextEncoderSpec::Concat(text_names)}, {"concat_video"}},
      {"concat-video-multi-text", per_text, {"concat_video"}},
      {"txv-per-feature", per_text, video_names},
  };
  std::string table = "variant\tK\tL\tR@1\tR@5\tR@10\tMedR\tmAP\n";
  for (const auto& v : variants) {
    const ModelConfig mc = ModelConfig::FromBanks(v.text, v.video, d, train.text, train.video);
    const TrainResult result = Train(TxVModel::Init(mc, ctx.seed), train, val, config);
    const MetricReport r = EvaluateSplit(result.model, test, {1, 5, 10}, ctx.threads);
    table += v.name + "\t" + std::to_string(v.text.size()) + "\t" +
             std::to_string(v.video.size()) + "\t" + Num(r.recall[0]) + "\t" +
             Num(r.recall[1]) + "\t" + Num(r.recall[2]) + "\t" + Num(r.median_rank) + "\t" +
             Num(r.mean_ap) + "\n";
    ctx.log() << "ablate " << v.name << ": test mAP " << Num(r.mean_ap) << '\n';
  }
  fs::create_directories(ctx.out_dir);
  WriteText(ctx.out_dir / "ablation.tsv", table);
  *ctx.out << table;
  return 0;
}

}  // namespace

const json& DefaultConfig() {
  static const json config = json::parse(kDefaultConfig);
  return config;
}

ExperimentConfig LoadConfig(const fs::path& config_path,
                            const std::vector<std::string>& overrides,
                            std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg{DefaultConfig(), json::object()};
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config '" + config_path.string() + "'");
    try {
      cfg.user = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config '" + config_path.string() + "': " + e.what());
    }
    if (!cfg.user.is_object()) throw ConfigError("config must be a JSON object");
  }
  for (const auto& o : overrides) ApplyOverride(cfg.user, o);
  if (seed) cfg.user["seed"] = *seed;
  Validate(DefaultConfig(), cfg.user, "");
  cfg.effective.merge_patch(cfg.user);
  return cfg;
}

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"txv: multi-space text-to-video retrieval"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed_value = 0;
  std::size_t threads = 1;
  std::vector<std::string> sets;
  std::vector<std::string> positional;
  auto add_globals = [&](CLI::App* a) {
    a->add_option("--config", config_path, "JSON experiment config");
    a->add_option("--seed", seed_value, "Master seed (overrides config seed)");
    a->add_option("--out", out_dir, "Output directory");
    a->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    a->add_option("--set", sets, "Override a config leaf, e.g. train.lr=5e-5")
        ->allow_extra_args(false);
  };
  add_globals(&app);
  struct Command {
    const char* name;
    const char* help;
    int (*fn)(Context&);
    const char* positional;
  };
  const Command commands[] = {
      {"gen-synth", "Write synthetic feature banks and pair lists", CmdGenSynth, nullptr},
      {"train", "Train one model", CmdTrain, nullptr},
      {"train-ensemble", "Train the six optimizer x learning-rate members", CmdTrainEnsemble,
       nullptr},
      {"retrieve", "Rank a video gallery for each query", CmdRetrieve, "checkpoints"},
      {"rescore", "Dual-softmax rescoring of a ranking TSV", CmdRescore, "input"},
      {"fuse", "Mean-rank fusion of ranking TSVs", CmdFuse, "inputs"},
      {"eval", "R@k, MedR, mAP and MRR of a ranking TSV", CmdEval, "files"},
      {"ablate", "Train and compare the feature-combination variants", CmdAblate, nullptr},
  };
  std::map<CLI::App*, const Command*> dispatch;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->fallthrough();
    if (c.positional != nullptr) sub->add_option(c.positional, positional, "Input files");
    dispatch[sub] = &c;
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::kConfig);
  }

  const Command* command = nullptr;
  for (const auto& [sub, c] : dispatch) {
    if (sub->parsed()) command = c;
  }
  try {
    Context ctx;
    std::optional<std::uint64_t> seed;
    if (app.count("--seed") > 0) seed = seed_value;
    ctx.config = LoadConfig(config_path, sets, seed);
    ctx.seed = ctx.config.effective.at("seed").get<std::uint64_t>();
    ctx.out_dir = out_dir;
    ctx.threads = threads;
    ctx.positional = positional;
    ctx.out = &out;
    ctx.err = &err;
    return command->fn(ctx);
  } catch (const Error& e) {
    err << "error[" << CategoryName(e.category()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "error[data]: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::kData);
  } catch (const json::exception& e) {
    err << "error[config]: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::kConfig);
  }
}

}  // namespace txv::cli
