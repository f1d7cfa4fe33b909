/*
 * Copyright 2026 The milbench Authors.
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

#ifndef MILBENCH_ARTIFACT_CACHE_HPP_
#define MILBENCH_ARTIFACT_CACHE_HPP_

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "milbench/digest.hpp"
#include "milbench/error.hpp"
#include "milbench/search_space.hpp"

namespace milbench {

namespace fs = std::filesystem;

struct ArtifactKey {
  std::vector<Stage> stage_set;  // ordered by pipeline position
  std::string digest;            // hex SHA-256
  std::string label;

  // "tiling+normalization"
  std::string stage_dir() const {
    std::string s;
    for (Stage st : stage_set) {
      if (!s.empty()) s += '+';
      s += stage_name(st);
    }
    return s;
  }
  std::string id() const { return stage_dir() + "/" + digest; }

  bool operator==(const ArtifactKey& o) const { return stage_set == o.stage_set && digest == o.digest; }
};

// Key of the artifact for `config` restricted to `stages`. The digest covers
// the canonical bytes of the subconfiguration, plus `salt` when non-empty.
inline ArtifactKey make_artifact_key(const PipelineSpace& space, const Configuration& config,
                                     std::span<const Stage> stages, std::string label = {},
                                     std::string_view salt = {}) {
  ArtifactKey key;
  for (Stage s : kAllStages)
    if (std::find(stages.begin(), stages.end(), s) != stages.end()) key.stage_set.push_back(s);
  std::string bytes = canonical_serialize(subconfig(space, config, key.stage_set));
  if (!salt.empty()) {
    bytes += "#salt=";
    bytes += salt;
  }
  key.digest = sha256_hex(bytes);
  key.label = std::move(label);
  return key;
}

// Content-addressed artifact store under `<root>/<stage_set>/<digest>`.
//
// File layout: "MBART1\n" <hex sha256 of payload> "\n" <payload>. A file that
// fails the check is treated as absent and overwritten. Writes go to a
// temporary file that is renamed into place. Concurrent misses on one key run
// the producer once: threads of this process wait on an in-flight slot, other
// processes on an flock()ed sidecar.
class ArtifactCache {
 public:
  struct Result {
    std::shared_ptr<const std::string> data;
    bool hit = false;
  };

  explicit ArtifactCache(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }
  fs::path path_of(const ArtifactKey& key) const { return root_ / key.stage_dir() / key.digest; }

  Result get_or_compute(const ArtifactKey& key, const std::function<std::string()>& producer) {
    const fs::path path = path_of(key);
    if (auto data = read_verified(path)) return {std::move(data), true};

    for (;;) {
      std::shared_ptr<Inflight> slot;
      bool leader = false;
      {
        std::unique_lock lock(mu_);
        auto& entry = inflight_[path.string()];
        if (!entry) {
          entry = std::make_shared<Inflight>();
          leader = true;
        }
        slot = entry;
        if (!leader) {
          cv_.wait(lock, [&] { return slot->done; });
          if (slot->data) return {slot->data, true};
          continue;  // the leader failed; try again
        }
      }

      std::shared_ptr<const std::string> data;
      bool hit = false;
      try {
        std::tie(data, hit) = produce_locked(path, producer);
      } catch (...) {
        finish(path, slot, nullptr);
        throw;
      }
      finish(path, slot, data);
      return {data, hit};
    }
  }

  static std::string encode(std::string_view payload) {
    std::string out = "MBART1\n";
    out += sha256_hex(payload);
    out += '\n';
    out.append(payload);
    return out;
  }

  static std::optional<std::string> decode(std::string_view file) {
    constexpr std::string_view kMagic = "MBART1\n";
    if (file.size() < kMagic.size() + 65 || file.substr(0, kMagic.size()) != kMagic) return std::nullopt;
    std::string_view digest = file.substr(kMagic.size(), 64);
    if (file[kMagic.size() + 64] != '\n') return std::nullopt;
    std::string_view payload = file.substr(kMagic.size() + 65);
    if (sha256_hex(payload) != digest) return std::nullopt;
    return std::string(payload);
  }

 private:
  struct Inflight {
    bool done = false;
    std::shared_ptr<const std::string> data;
  };

  static std::shared_ptr<const std::string> read_verified(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return nullptr;
    std::ostringstream buf;
    buf << in.rdbuf();
    auto payload = decode(buf.str());
    if (!payload) return nullptr;
    return std::make_shared<const std::string>(std::move(*payload));
  }

  std::pair<std::shared_ptr<const std::string>, bool> produce_locked(
      const fs::path& path, const std::function<std::string()>& producer) {
    fs::create_directories(path.parent_path());
    const fs::path lock_path = path.string() + ".lock";
    int fd = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw Error("cache_io", "cannot open cache lock " + lock_path.string());
    struct Unlock {
      int fd;
      ~Unlock() {
        ::flock(fd, LOCK_UN);
        ::close(fd);
      }
    } unlock{fd};
    while (::flock(fd, LOCK_EX) != 0) {
      if (errno != EINTR) throw Error("cache_io", "cannot lock " + lock_path.string());
    }
    // Another process may have stored it while we waited.
    if (auto data = read_verified(path)) return {std::move(data), true};

    auto data = std::make_shared<const std::string>(producer());
    write_atomic(path, encode(*data));
    return {std::move(data), false};
  }

  static void write_atomic(const fs::path& path, const std::string& bytes) {
    static std::atomic<std::uint64_t> counter{0};
    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << ::getpid() << "."
             << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "." << counter++;
    const fs::path tmp = path.parent_path() / tmp_name.str();
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw Error("cache_io", "cannot create " + tmp.string());
    const char* p = bytes.data();
    std::size_t left = bytes.size();
    while (left > 0) {
      ssize_t n = ::write(fd, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        ::close(fd);
        fs::remove(tmp);
        throw Error("cache_io", "write failed for " + tmp.string());
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
    fs::rename(tmp, path);
  }

  void finish(const fs::path& path, const std::shared_ptr<Inflight>& slot,
              std::shared_ptr<const std::string> data) {
    std::lock_guard lock(mu_);
    slot->done = true;
    slot->data = std::move(data);
    inflight_.erase(path.string());
    cv_.notify_all();
  }

  fs::path root_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, std::shared_ptr<Inflight>> inflight_;
};

}  // namespace milbench

#endif  // MILBENCH_ARTIFACT_CACHE_HPP_
