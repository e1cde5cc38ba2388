#include "checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace fedsim {

using nlohmann::json;

namespace {

void store_le64(uint64_t v, unsigned char * p) {
    for (int i = 0; i < 8; ++i) {
        p[i] = (unsigned char) (v >> (8 * i));
    }
}

uint64_t load_le64(const unsigned char * p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= (uint64_t) p[i] << (8 * i);
    }
    return v;
}

json manifest_of(const ModelState & m) {
    json tensors = json::array();
    uint64_t offset = 0;
    for (const ParamTensor & t : m.params) {
        json entry = {
            {"name", t.name},
            {"shape", t.shape},
            {"offset", offset},
            {"count", t.param_count()},
        };
        entry["block_id"] = t.block_id ? json(*t.block_id) : json(nullptr);
        tensors.push_back(std::move(entry));
        offset += (uint64_t) t.param_count() * 8;
    }
    return json{
        {"arch",
         {{"vocab_size", m.arch.vocab_size},
          {"embed_dim", m.arch.embed_dim},
          {"context_len", m.arch.context_len},
          {"hidden_dim", m.arch.hidden_dim},
          {"num_blocks", m.arch.num_blocks}}},
        {"tensors", tensors},
    };
}

} // namespace

void save_checkpoint(const ModelState & model, const std::string & path) {
    model.arch.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open checkpoint for writing: " + path);
    }

    uint64_t blob_bytes = 0;
    for (const ParamTensor & t : model.params) {
        blob_bytes += (uint64_t) t.param_count() * 8;
    }

    out << manifest_of(model).dump() << '\n';
    out << blob_bytes << '\n';

    std::vector<unsigned char> buf;
    for (const ParamTensor & t : model.params) {
        buf.resize(t.values.size() * 8);
        for (size_t i = 0; i < t.values.size(); ++i) {
            store_le64(std::bit_cast<uint64_t>(t.values[i]), buf.data() + i * 8);
        }
        out.write((const char *) buf.data(), (std::streamsize) buf.size());
    }
    if (!out) {
        throw std::runtime_error("checkpoint write failed: " + path);
    }
}

ModelState load_checkpoint(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const size_t nl1 = raw.find('\n');
    if (nl1 == std::string::npos) {
        throw std::runtime_error("checkpoint: missing manifest line");
    }
    const size_t nl2 = raw.find('\n', nl1 + 1);
    if (nl2 == std::string::npos) {
        throw std::runtime_error("checkpoint: missing blob length line");
    }

    json manifest;
    try {
        manifest = json::parse(raw.substr(0, nl1));
    } catch (const json::exception & e) {
        throw std::runtime_error(std::string("checkpoint: corrupt manifest: ") + e.what());
    }

    uint64_t declared_bytes = 0;
    try {
        declared_bytes = std::stoull(raw.substr(nl1 + 1, nl2 - nl1 - 1));
    } catch (const std::exception &) {
        throw std::runtime_error("checkpoint: bad blob length line");
    }
    const size_t blob_begin = nl2 + 1;
    if (raw.size() - blob_begin != declared_bytes) {
        throw std::runtime_error("checkpoint: blob truncated or trailing bytes");
    }

    ArchConfig arch;
    ModelState expected;
    try {
        const json & a = manifest.at("arch");
        arch.vocab_size = a.at("vocab_size").get<int64_t>();
        arch.embed_dim = a.at("embed_dim").get<int64_t>();
        arch.context_len = a.at("context_len").get<int64_t>();
        arch.hidden_dim = a.at("hidden_dim").get<int64_t>();
        arch.num_blocks = a.at("num_blocks").get<int64_t>();
        arch.validate();
        expected = make_empty_model(arch);

        const json & tensors = manifest.at("tensors");
        if (tensors.size() != expected.params.size()) {
            throw std::runtime_error("tensor count does not match the architecture");
        }
        uint64_t offset = 0;
        for (size_t i = 0; i < expected.params.size(); ++i) {
            const json & entry = tensors.at(i);
            ParamTensor & t = expected.params[i];
            if (entry.at("name").get<std::string>() != t.name) {
                throw std::runtime_error("unknown or misordered tensor name '" +
                                         entry.at("name").get<std::string>() + "'");
            }
            if (entry.at("shape").get<std::vector<int64_t>>() != t.shape) {
                throw std::runtime_error("shape mismatch for tensor '" + t.name + "'");
            }
            std::optional<int> block_id;
            if (!entry.at("block_id").is_null()) {
                block_id = entry.at("block_id").get<int>();
            }
            if (block_id != t.block_id) {
                throw std::runtime_error("block id mismatch for tensor '" + t.name + "'");
            }
            if (entry.at("count").get<int64_t>() != t.param_count()) {
                throw std::runtime_error("value count mismatch for tensor '" + t.name + "'");
            }
            if (entry.at("offset").get<uint64_t>() != offset) {
                throw std::runtime_error("offset mismatch for tensor '" + t.name + "'");
            }
            offset += (uint64_t) t.param_count() * 8;
        }
        if (offset != declared_bytes) {
            throw std::runtime_error("manifest counts do not match the blob length");
        }
    } catch (const json::exception & e) {
        throw std::runtime_error(std::string("checkpoint: corrupt manifest: ") + e.what());
    }

    const unsigned char * blob = (const unsigned char *) raw.data() + blob_begin;
    size_t pos = 0;
    for (ParamTensor & t : expected.params) {
        for (double & v : t.values) {
            v = std::bit_cast<double>(load_le64(blob + pos));
            pos += 8;
        }
    }
    return expected;
}

} // namespace fedsim
