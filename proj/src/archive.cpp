/*
 * Copyright 2026 The capmatch Authors.
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

#include "capmatch/archive.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "blob_io.hpp"
#include "json.hpp"

namespace capmatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMagic = "CVRA";
constexpr int kVersion = 1;
constexpr const char* kManifest = "manifest.json";
constexpr const char* kCaptionSidecar = "captions.jsonl";

struct Group {
  const char* name;
  const char* file;
};
constexpr Group kWords{"words", "words.f32"};
constexpr Group kQuery{"query", "query.f32"};
constexpr Group kFrames{"frames", "frames.f32"};
constexpr Group kCaptions{"captions", "captions.f32"};

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) { return fnv1a(h, &v, sizeof v); }

using blob::append_floats;
using blob::read_file;
using blob::write_file;

Tensor<float> decode_floats(const std::string& bytes, std::size_t offset,
                            std::size_t rows, std::size_t cols) {
  return blob::decode_floats(bytes, offset, {rows, cols});
}

void check_finite(const Tensor<float>& t, const std::string& id, const char* what) {
  if (!t.all_finite()) {
    fail(ErrorCode::kNonFiniteValue, "item '" + id + "' has a non-finite value in its " + what);
  }
}

Tensor<float> normalized(const Tensor<float>& t, const std::string& id, const char* what) {
  try {
    return l2_normalize(t);
  } catch (const Error& e) {
    fail(e.code(), "item '" + id + "' " + what + ": " + e.what());
  }
}

template <typename F>
auto manifest_field(const json& j, const char* key, F&& get) {
  if (!j.is_object() || !j.contains(key)) {
    fail(ErrorCode::kInvariantViolation, std::string("manifest is missing '") + key + "'");
  }
  try {
    return get(j.at(key));
  } catch (const json::exception&) {
    fail(ErrorCode::kInvariantViolation, std::string("manifest field '") + key + "' has the wrong type");
  }
}

std::size_t size_field(const json& j, const char* key) {
  return manifest_field(j, key, [](const json& v) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw json::type_error::create(302, "expected unsigned", &v);
    }
    return v.get<std::size_t>();
  });
}

}  // namespace

const char* split_name(Split split) noexcept {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kInvalidConfig, "unknown split '" + name + "'");
}

EmbeddingArchive EmbeddingArchive::from_raw(std::size_t dim, Split split,
                                            std::vector<QueryItem> queries,
                                            std::vector<VideoItem> videos,
                                            std::size_t max_words) {
  if (dim == 0) fail(ErrorCode::kInvariantViolation, "embedding width must be positive");
  if (queries.size() != videos.size()) {
    fail(ErrorCode::kInvariantViolation, "query and video lists differ in length");
  }
  std::set<std::string> qids, vids;
  for (const auto& q : queries) {
    if (!qids.insert(q.id).second) fail(ErrorCode::kInvariantViolation, "duplicate query id '" + q.id + "'");
    if (q.words.rows() < 1 || q.words.rows() > max_words || q.words.cols() != dim) {
      fail(ErrorCode::kInvariantViolation, "query '" + q.id + "' word block has bad shape");
    }
    if (q.global.size() != dim) {
      fail(ErrorCode::kInvariantViolation, "query '" + q.id + "' global embedding has bad width");
    }
    check_finite(q.words, q.id, "word embeddings");
    check_finite(q.global, q.id, "global embedding");
  }
  for (const auto& v : videos) {
    if (!vids.insert(v.id).second) fail(ErrorCode::kInvariantViolation, "duplicate video id '" + v.id + "'");
    if (v.frames.rows() < 1 || v.frames.cols() != dim) {
      fail(ErrorCode::kInvariantViolation, "video '" + v.id + "' frame block has bad shape");
    }
    if (v.captions.cols() != dim) {
      fail(ErrorCode::kInvariantViolation, "video '" + v.id + "' caption block has bad width");
    }
    if (v.caption_texts && v.caption_texts->size() != v.captions.rows()) {
      fail(ErrorCode::kInvariantViolation, "video '" + v.id + "' caption text count differs from C");
    }
    check_finite(v.frames, v.id, "frame embeddings");
    check_finite(v.captions, v.id, "caption embeddings");
  }

  EmbeddingArchive a;
  a.dim_ = dim;
  a.split_ = split;
  std::uint64_t h = 1469598103934665603ULL;
  h = fnv1a(h, dim);
  h = fnv1a(h, static_cast<std::uint64_t>(split));
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    const auto& v = videos[i];
    a.queries_.push_back(QueryItem{q.id, normalized(q.words, q.id, "words"),
                                   normalized(Tensor<float>({1, dim}, q.global.values()), q.id, "global")});
    a.videos_.push_back(VideoItem{v.id, normalized(v.frames, v.id, "frames"),
                                  normalized(v.captions, v.id, "captions"), v.caption_texts});
    h = fnv1a(h, q.id.data(), q.id.size());
    h = fnv1a(h, v.id.data(), v.id.size());
    h = fnv1a(h, q.words.rows());
    h = fnv1a(h, v.frames.rows());
    h = fnv1a(h, v.captions.rows());
  }
  for (auto& q : queries) q.global = Tensor<float>({1, dim}, q.global.values());
  a.raw_queries_ = std::move(queries);
  a.raw_videos_ = std::move(videos);
  a.fingerprint_ = h;
  return a;
}

bool EmbeddingArchive::bitwise_equal(const EmbeddingArchive& other) const {
  if (dim_ != other.dim_ || split_ != other.split_ || size() != other.size()) return false;
  auto same_q = [](const QueryItem& a, const QueryItem& b) {
    return a.id == b.id && a.words.bitwise_equal(b.words) && a.global.bitwise_equal(b.global);
  };
  auto same_v = [](const VideoItem& a, const VideoItem& b) {
    return a.id == b.id && a.frames.bitwise_equal(b.frames) &&
           a.captions.bitwise_equal(b.captions) && a.caption_texts == b.caption_texts;
  };
  for (std::size_t i = 0; i < size(); ++i) {
    if (!same_q(queries_[i], other.queries_[i]) || !same_q(raw_queries_[i], other.raw_queries_[i]) ||
        !same_v(videos_[i], other.videos_[i]) || !same_v(raw_videos_[i], other.raw_videos_[i])) {
      return false;
    }
  }
  return true;
}

void write_archive(const EmbeddingArchive& archive, const fs::path& dir) {
  const std::size_t dim = archive.dim();
  const auto& qs = archive.raw_queries();
  const auto& vs = archive.raw_videos();
  // Archives are only constructible through from_raw, so this re-check guards
  // against in-place corruption of a moved-from or default archive.
  if (qs.size() != vs.size() || (dim == 0 && !qs.empty())) {
    fail(ErrorCode::kInvariantViolation, "archive is not in a writable state");
  }

  std::map<std::string, std::string> blobs;
  json items = json::array();
  json blob_index = json::array();
  auto add_blob = [&](const Group& g, std::size_t i, const Tensor<float>& t) {
    std::string& bytes = blobs[g.file];
    blob_index.push_back({{"name", std::string(g.name) + "/" + std::to_string(i)},
                          {"file", g.file},
                          {"offset", bytes.size()},
                          {"len_bytes", t.size() * 4}});
    append_floats(bytes, t);
  };
  for (const Group* g : {&kWords, &kQuery, &kFrames, &kCaptions}) blobs[g->file];

  std::string sidecar;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    items.push_back({{"id", vs[i].id},
                     {"words", qs[i].words.rows()},
                     {"frames", vs[i].frames.rows()},
                     {"captions", vs[i].captions.rows()},
                     {"has_caption_text", vs[i].caption_texts.has_value()}});
    if (vs[i].caption_texts) {
      sidecar += json({{"id", vs[i].id}, {"texts", *vs[i].caption_texts}}).dump() + "\n";
    }
  }
  for (std::size_t i = 0; i < qs.size(); ++i) add_blob(kWords, i, qs[i].words);
  for (std::size_t i = 0; i < qs.size(); ++i) add_blob(kQuery, i, qs[i].global);
  for (std::size_t i = 0; i < vs.size(); ++i) add_blob(kFrames, i, vs[i].frames);
  for (std::size_t i = 0; i < vs.size(); ++i) add_blob(kCaptions, i, vs[i].captions);

  json manifest = {{"magic", kMagic},       {"version", kVersion},
                   {"dim", dim},            {"count", qs.size()},
                   {"split", split_name(archive.split())},
                   {"items", items},        {"blobs", blob_index}};
  // Queries and videos share the manifest id; a query id that differs from
  // its video's id cannot be represented.
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (qs[i].id != vs[i].id) {
      fail(ErrorCode::kInvariantViolation, "query id '" + qs[i].id + "' differs from video id '" + vs[i].id + "'");
    }
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create directory " + dir.string() + ": " + ec.message());
  for (const auto& [file, bytes] : blobs) write_file(dir / file, bytes);
  if (!sidecar.empty()) {
    write_file(dir / kCaptionSidecar, sidecar);
  } else {
    fs::remove(dir / kCaptionSidecar, ec);
  }
  write_file(dir / kManifest, manifest.dump(2) + "\n");
}

EmbeddingArchive read_archive(const fs::path& dir, const ReadOptions& options) {
  const std::string text = read_file(dir / kManifest);
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kBadMagic, "manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!manifest.is_object() || !manifest.contains("magic") || manifest["magic"] != kMagic) {
    fail(ErrorCode::kBadMagic, "manifest magic is not \"" + std::string(kMagic) + "\"");
  }
  if (!manifest.contains("version") || manifest["version"] != kVersion) {
    fail(ErrorCode::kVersionMismatch, "unsupported archive version " +
                                          (manifest.contains("version") ? manifest["version"].dump() : "<none>"));
  }
  const std::size_t dim = size_field(manifest, "dim");
  const std::size_t count = size_field(manifest, "count");
  const Split split = parse_split(manifest_field(manifest, "split", [](const json& v) { return v.get<std::string>(); }));
  const json items = manifest_field(manifest, "items", [](const json& v) {
    if (!v.is_array()) throw json::type_error::create(302, "expected array", &v);
    return v;
  });
  const json blob_list = manifest_field(manifest, "blobs", [](const json& v) {
    if (!v.is_array()) throw json::type_error::create(302, "expected array", &v);
    return v;
  });
  if (items.size() != count) {
    fail(ErrorCode::kShapeMismatch, "manifest count " + std::to_string(count) + " but " +
                                        std::to_string(items.size()) + " items listed");
  }

  struct BlobRef {
    std::string file;
    std::size_t offset;
    std::size_t len;
  };
  std::map<std::string, BlobRef> blob_refs;
  for (const auto& b : blob_list) {
    BlobRef ref{manifest_field(b, "file", [](const json& v) { return v.get<std::string>(); }),
                size_field(b, "offset"), size_field(b, "len_bytes")};
    if (ref.file.find('/') != std::string::npos || ref.file.find('\\') != std::string::npos) {
      fail(ErrorCode::kInvariantViolation, "blob file '" + ref.file + "' must be a plain file name");
    }
    blob_refs[manifest_field(b, "name", [](const json& v) { return v.get<std::string>(); })] = ref;
  }

  std::map<std::string, std::string> files;
  std::map<std::string, std::size_t> extent;
  auto load = [&](const Group& g, std::size_t i, std::size_t rows, const std::string& id) {
    const std::string name = std::string(g.name) + "/" + std::to_string(i);
    auto it = blob_refs.find(name);
    if (it == blob_refs.end()) fail(ErrorCode::kShapeMismatch, "manifest has no blob '" + name + "'");
    const BlobRef& ref = it->second;
    const std::size_t expected = rows * dim * 4;
    if (ref.len != expected) {
      fail(ErrorCode::kShapeMismatch, "item '" + id + "' " + g.name + ": manifest declares " +
                                          std::to_string(rows) + " rows (" + std::to_string(expected) +
                                          " bytes) but blob entry holds " + std::to_string(ref.len) + " bytes");
    }
    if (!files.count(ref.file)) files[ref.file] = read_file(dir / ref.file);
    const std::string& bytes = files[ref.file];
    if (ref.offset + ref.len > bytes.size()) {
      fail(ErrorCode::kShapeMismatch, "item '" + id + "' " + g.name + ": blob file " + ref.file +
                                          " holds " + std::to_string(bytes.size()) + " bytes, needs " +
                                          std::to_string(ref.offset + ref.len));
    }
    extent[ref.file] = std::max(extent[ref.file], ref.offset + ref.len);
    Tensor<float> t = decode_floats(bytes, ref.offset, rows, dim);
    check_finite(t, id, g.name);
    return t;
  };

  std::map<std::string, std::vector<std::string>> texts;
  bool any_text = false;
  for (const auto& item : items) any_text = any_text || item.value("has_caption_text", false);
  if (any_text) {
    std::istringstream lines(read_file(dir / kCaptionSidecar));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        texts[j.at("id").get<std::string>()] = j.at("texts").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        fail(ErrorCode::kInvariantViolation, "malformed caption sidecar line: " + std::string(e.what()));
      }
    }
  }

  std::vector<QueryItem> queries;
  std::vector<VideoItem> videos;
  for (std::size_t i = 0; i < count; ++i) {
    const json& item = items[i];
    const std::string id = manifest_field(item, "id", [](const json& v) { return v.get<std::string>(); });
    const std::size_t w = size_field(item, "words");
    const std::size_t f = size_field(item, "frames");
    const std::size_t c = size_field(item, "captions");
    QueryItem q{id, load(kWords, i, w, id), load(kQuery, i, 1, id)};
    VideoItem v{id, load(kFrames, i, f, id), load(kCaptions, i, c, id), std::nullopt};
    if (item.value("has_caption_text", false)) {
      auto it = texts.find(id);
      if (it == texts.end()) fail(ErrorCode::kShapeMismatch, "item '" + id + "' has no caption texts in the sidecar");
      if (it->second.size() != c) {
        fail(ErrorCode::kShapeMismatch, "item '" + id + "' declares " + std::to_string(c) +
                                            " captions but the sidecar holds " + std::to_string(it->second.size()));
      }
      v.caption_texts = it->second;
    }
    queries.push_back(std::move(q));
    videos.push_back(std::move(v));
  }
  for (const auto& [file, bytes] : files) {
    if (extent[file] != bytes.size()) {
      fail(ErrorCode::kShapeMismatch, "blob file " + file + " holds " + std::to_string(bytes.size()) +
                                          " bytes but the manifest accounts for " + std::to_string(extent[file]));
    }
  }
  return EmbeddingArchive::from_raw(dim, split, std::move(queries), std::move(videos), options.max_words);
}

}  // namespace capmatch
