// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#include "ava/nvsnet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <set>

#include "ava/util/errors.hpp"

namespace ava::nvsnet {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'N', 'V'};
constexpr uint32_t kVersion = 1;

struct FilePtr {
    FILE* f = nullptr;
    explicit FilePtr(FILE* fp) : f(fp) {}
    ~FilePtr() {
        if (f) std::fclose(f);
    }
    FilePtr(const FilePtr&) = delete;
    FilePtr& operator=(const FilePtr&) = delete;
};

template <class T>
void write_raw(FILE* f, const T* data, size_t count, const std::string& path) {
    if (std::fwrite(data, sizeof(T), count, f) != count) {
        throw util::IoError("short write to checkpoint '" + path + "'");
    }
}

template <class T>
void read_raw(FILE* f, T* data, size_t count, const std::string& path) {
    if (std::fread(data, sizeof(T), count, f) != count) {
        throw util::FormatError("checkpoint '" + path + "' is truncated");
    }
}

float as_float(int v) { return float(v); }

int record_int(const std::map<std::string, CheckpointRecord>& m, const std::string& name) {
    auto it = m.find(name);
    if (it == m.end()) {
        throw util::FormatError("checkpoint missing required record '" + name + "'");
    }
    if (it->second.data.size() != 1) {
        throw util::FormatError("checkpoint record '" + name + "' is not a scalar");
    }
    return int(it->second.data[0]);
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp.f) throw util::IoError("cannot open checkpoint '" + path + "' for writing");
    write_raw(fp.f, kMagic, 4, path);
    const uint32_t version = kVersion;
    write_raw(fp.f, &version, 1, path);
    const uint32_t count = uint32_t(records.size());
    write_raw(fp.f, &count, 1, path);
    for (const auto& rec : records) {
        if (rec.name.size() > 0xffff) {
            throw util::InputError("checkpoint record name too long: " + rec.name);
        }
        if (rec.extents.size() > 0xff) {
            throw util::InputError("checkpoint record rank too large: " + rec.name);
        }
        size_t numel = 1;
        for (uint32_t e : rec.extents) numel *= e;
        if (numel != rec.data.size()) {
            throw util::InputError("checkpoint record '" + rec.name +
                                   "' extents disagree with payload length");
        }
        const uint16_t name_len = uint16_t(rec.name.size());
        write_raw(fp.f, &name_len, 1, path);
        write_raw(fp.f, rec.name.data(), rec.name.size(), path);
        const uint8_t rank = uint8_t(rec.extents.size());
        write_raw(fp.f, &rank, 1, path);
        write_raw(fp.f, rec.extents.data(), rec.extents.size(), path);
        write_raw(fp.f, rec.data.data(), rec.data.size(), path);
    }
}

std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp.f) throw util::IoError("cannot open checkpoint '" + path + "'");
    char magic[4];
    read_raw(fp.f, magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw util::FormatError("'" + path + "' is not a checkpoint (bad magic)");
    }
    uint32_t version = 0;
    read_raw(fp.f, &version, 1, path);
    if (version != kVersion) {
        throw util::FormatError("checkpoint '" + path + "' has unsupported version " +
                                std::to_string(version));
    }
    uint32_t count = 0;
    read_raw(fp.f, &count, 1, path);
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t name_len = 0;
        read_raw(fp.f, &name_len, 1, path);
        CheckpointRecord rec;
        rec.name.resize(name_len);
        read_raw(fp.f, rec.name.data(), name_len, path);
        uint8_t rank = 0;
        read_raw(fp.f, &rank, 1, path);
        rec.extents.resize(rank);
        read_raw(fp.f, rec.extents.data(), rank, path);
        size_t numel = 1;
        for (uint32_t e : rec.extents) numel *= e;
        if (numel > (size_t(1) << 31)) {
            throw util::FormatError("checkpoint record '" + rec.name + "' has absurd extents");
        }
        rec.data.resize(numel);
        read_raw(fp.f, rec.data.data(), numel, path);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<CheckpointRecord> renderer_records(RendererParams& params) {
    std::vector<CheckpointRecord> records;
    visit_params(params, [&records](const std::string& name, diffcore::Tensor& t) {
        CheckpointRecord rec;
        rec.name = name;
        for (int e : t.shape()) rec.extents.push_back(uint32_t(e));
        rec.data.assign(t.data().begin(), t.data().end());
        records.push_back(std::move(rec));
    });

    const ModelConfig& cfg = params.config;
    auto scalar = [&records](const std::string& name, float v) {
        records.push_back({name, {1}, {v}});
    };
    scalar("config.token_dim", as_float(cfg.token_dim));
    scalar("config.heads", as_float(cfg.heads));
    scalar("config.blocks", as_float(cfg.blocks));
    scalar("config.samples_per_ray", as_float(cfg.samples_per_ray));
    scalar("config.pe_frequencies", as_float(cfg.pe_frequencies));
    scalar("config.ffn_multiplier", as_float(cfg.ffn_multiplier));
    scalar("config.latent_dim", as_float(cfg.latent_dim));
    scalar("config.latent_hidden1", as_float(cfg.latent_hidden1));
    scalar("config.latent_hidden2", as_float(cfg.latent_hidden2));
    scalar("config.near", float(cfg.near));
    scalar("config.far", float(cfg.far));
    scalar("latent.mode", params.latent.mode == applat::LatentMode::kFree ? 0.0f : 1.0f);
    for (size_t i = 0; i < params.latent.conditions.size(); ++i) {
        const auto& name = params.latent.conditions[i];
        const auto& c = params.latent.coords.at(name);
        records.push_back(
            {"latent.cond." + name + ".meta", {3}, {float(i), float(c.x()), float(c.y())}});
    }
    return records;
}

void save_renderer(const std::string& path, RendererParams& params,
                   const std::vector<CheckpointRecord>& extra) {
    auto records = renderer_records(params);
    records.insert(records.end(), extra.begin(), extra.end());
    write_checkpoint(path, records);
}

LoadedCheckpoint load_renderer(const std::string& path) {
    std::map<std::string, CheckpointRecord> by_name;
    for (auto& rec : read_checkpoint(path)) {
        if (!by_name.emplace(rec.name, std::move(rec)).second) {
            throw util::FormatError("checkpoint '" + path + "' repeats record '" + rec.name +
                                    "'");
        }
    }

    ModelConfig cfg;
    cfg.token_dim = record_int(by_name, "config.token_dim");
    cfg.heads = record_int(by_name, "config.heads");
    cfg.blocks = record_int(by_name, "config.blocks");
    cfg.samples_per_ray = record_int(by_name, "config.samples_per_ray");
    cfg.pe_frequencies = record_int(by_name, "config.pe_frequencies");
    cfg.ffn_multiplier = record_int(by_name, "config.ffn_multiplier");
    cfg.latent_dim = record_int(by_name, "config.latent_dim");
    cfg.latent_hidden1 = record_int(by_name, "config.latent_hidden1");
    cfg.latent_hidden2 = record_int(by_name, "config.latent_hidden2");
    cfg.near = double(by_name.at("config.near").data.at(0));
    cfg.far = double(by_name.at("config.far").data.at(0));
    cfg.latent_mode = record_int(by_name, "latent.mode") == 0 ? applat::LatentMode::kFree
                                                              : applat::LatentMode::kStructured;

    // Condition registry, ordered by stored index.
    std::map<int, std::string> ordered;
    const std::string prefix = "latent.cond.";
    const std::string suffix = ".meta";
    for (const auto& [name, rec] : by_name) {
        if (name.rfind(prefix, 0) != 0 || name.size() <= prefix.size() + suffix.size() ||
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
            continue;
        }
        if (rec.data.size() != 3) {
            throw util::FormatError("malformed condition record '" + name + "'");
        }
        const std::string cond =
            name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
        ordered[int(rec.data[0])] = cond;
    }
    cfg.conditions.clear();
    for (const auto& [idx, cond] : ordered) cfg.conditions.push_back(cond);
    if (cfg.conditions.empty()) {
        throw util::FormatError("checkpoint '" + path + "' has no condition registry");
    }

    LoadedCheckpoint out{make_renderer_params<float>(cfg, 0), {}};
    std::set<std::string> consumed;
    visit_params(out.params, [&](const std::string& name, diffcore::Tensor& t) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw util::FormatError("checkpoint '" + path + "' missing weight record '" + name +
                                    "'");
        }
        const auto& rec = it->second;
        if (int64_t(rec.data.size()) != t.size()) {
            throw util::FormatError("checkpoint record '" + name + "' has wrong element count");
        }
        std::copy(rec.data.begin(), rec.data.end(), t.mutable_data().begin());
        consumed.insert(name);
    });

    // Restore stored coordinates (registry is authoritative over defaults).
    for (const auto& [name, rec] : by_name) {
        if (name.rfind(prefix, 0) == 0 &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            const std::string cond =
                name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
            out.params.latent.coords[cond] = Eigen::Vector2d(rec.data[1], rec.data[2]);
            consumed.insert(name);
        }
    }

    for (auto& [name, rec] : by_name) {
        if (consumed.count(name) || name.rfind("config.", 0) == 0 || name == "latent.mode") {
            continue;
        }
        out.extra.emplace(name, std::move(rec));
    }
    return out;
}

}  // namespace ava::nvsnet
