#include "vitfill/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "vitfill/common.hpp"
#include "vitfill/patching.hpp"

using nlohmann::json;

namespace vitfill {

namespace {

struct NamedTensor {
    std::string name;
    Tensor<float>* tensor;
};

// Canonical serialization order: ViT walk, generator walk, then optimizer
// slots sorted by parameter name with .m before .v.
std::vector<NamedTensor> named_tensors(Checkpoint& ck) {
    std::vector<NamedTensor> out;
    const auto push = [&out](const std::string& name, Tensor<float>& t) {
        out.push_back({name, &t});
    };
    if (ck.has_vit) for_each_vit_tensor(ck.vit, push);
    for_each_generator_tensor(ck.gen, push);
    for (auto& [name, slot] : ck.optimizer) {
        push("adam." + name + ".m", slot.m);
        push("adam." + name + ".v", slot.v);
    }
    return out;
}

json arch_json(const Checkpoint& ck) {
    return {
        {"vit_mode", ck.vit_mode},
        {"vit",
         {{"scheme", scheme_to_string(ck.vit_config.scheme)},
          {"d_model", ck.vit_config.d_model},
          {"heads", ck.vit_config.heads},
          {"depth", ck.vit_config.depth},
          {"mlp_hidden", ck.vit_config.mlp_hidden},
          {"use_positional", ck.vit_config.use_positional}}},
        {"image", {ck.image_channels, ck.image_h, ck.image_w}},
        {"composition", composition_to_string(ck.composition)},
        {"lambda_known", ck.lambda_known},
        {"mask", {ck.mask_spec.min_side, ck.mask_spec.max_side}},
    };
}

void check_keys(const json& obj, std::initializer_list<const char*> keys,
                const std::string& where) {
    for (const char* key : keys) {
        if (!obj.contains(key)) {
            throw DecodeError("checkpoint " + where + ": missing key \"" + key + "\"");
        }
    }
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::none_of(keys.begin(), keys.end(),
                         [&key](const char* k) { return key == k; })) {
            throw DecodeError("checkpoint " + where + ": unknown key \"" + key + "\"");
        }
    }
}

} // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    auto& mut = const_cast<Checkpoint&>(ck); // the walkers need mutable refs; save only reads
    const std::vector<NamedTensor> tensors = named_tensors(mut);

    json table = json::array();
    std::uint64_t offset = 0;
    for (const NamedTensor& nt : tensors) {
        const std::uint64_t count = static_cast<std::uint64_t>(nt.tensor->numel());
        table.push_back({{"name", nt.name},
                         {"shape", nt.tensor->shape},
                         {"offset", offset},
                         {"count", count}});
        offset += count * sizeof(float);
    }

    json optimizer = json::array();
    for (const auto& [name, slot] : ck.optimizer) {
        optimizer.push_back({{"name", name}, {"step", slot.step}});
    }

    const json header = {
        {"format_version", kCheckpointVersion},
        {"arch", arch_json(ck)},
        {"epoch", ck.epoch},
        {"seed", ck.seed},
        {"rng_state", ck.rng_state},
        {"val_masked_psnr", ck.val_masked_psnr},
        {"resolved_config", ck.resolved_config},
        {"has_vit", ck.has_vit},
        {"tensors", std::move(table)},
        {"optimizer", std::move(optimizer)},
    };
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kCheckpointMagic, 4);
    const std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const NamedTensor& nt : tensors) {
        out.write(reinterpret_cast<const char*>(nt.tensor->data.data()),
                  static_cast<std::streamsize>(nt.tensor->data.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading " + path);

    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw DecodeError(path + " is not a checkpoint file (bad magic)");
    }
    std::uint32_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 4, sizeof(header_len));
    if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) {
        throw DecodeError(path + ": truncated checkpoint header");
    }

    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const json::parse_error& e) {
        throw DecodeError(path + ": checkpoint header is not valid JSON: " + e.what());
    }

    try {
        check_keys(header,
                   {"format_version", "arch", "epoch", "seed", "rng_state", "val_masked_psnr",
                    "resolved_config", "has_vit", "tensors", "optimizer"},
                   "header");
        const int version = header.at("format_version").get<int>();
        if (version != kCheckpointVersion) {
            throw ValidationError(path + ": unsupported checkpoint version " +
                                  std::to_string(version) + " (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
        }

        Checkpoint ck;
        const json& arch = header.at("arch");
        check_keys(arch, {"vit_mode", "vit", "image", "composition", "lambda_known", "mask"},
                   "arch");
        const json& vit = arch.at("vit");
        check_keys(vit, {"scheme", "d_model", "heads", "depth", "mlp_hidden", "use_positional"},
                   "arch.vit");
        ck.vit_config.scheme = parse_scheme(vit.at("scheme").get<std::string>());
        ck.vit_config.d_model = vit.at("d_model").get<int>();
        ck.vit_config.heads = vit.at("heads").get<int>();
        ck.vit_config.depth = vit.at("depth").get<int>();
        ck.vit_config.mlp_hidden = vit.at("mlp_hidden").get<int>();
        ck.vit_config.use_positional = vit.at("use_positional").get<bool>();
        ck.vit_mode = arch.at("vit_mode").get<std::string>();
        const json& image = arch.at("image");
        if (!image.is_array() || image.size() != 3) {
            throw DecodeError(path + ": arch.image must be [C, H, W]");
        }
        ck.image_channels = image.at(0).get<int>();
        ck.image_h = image.at(1).get<int>();
        ck.image_w = image.at(2).get<int>();
        ck.composition = parse_composition(arch.at("composition").get<std::string>());
        ck.lambda_known = arch.at("lambda_known").get<double>();
        const json& mask = arch.at("mask");
        if (!mask.is_array() || mask.size() != 2) {
            throw DecodeError(path + ": arch.mask must be [min_side, max_side]");
        }
        ck.mask_spec.min_side = mask.at(0).get<int>();
        ck.mask_spec.max_side = mask.at(1).get<int>();

        ck.epoch = header.at("epoch").get<int>();
        ck.seed = header.at("seed").get<std::uint64_t>();
        ck.rng_state = header.at("rng_state").get<std::string>();
        ck.val_masked_psnr = header.at("val_masked_psnr").get<std::vector<double>>();
        ck.resolved_config = header.at("resolved_config").get<std::string>();
        ck.has_vit = header.at("has_vit").get<bool>();

        // Skeletons pin every expected tensor name and shape before any blob
        // is trusted.
        if (ck.has_vit) {
            ck.vit = init_vit<float>(ck.vit_config, ck.image_channels, ck.image_h, ck.image_w, 0);
        }
        ck.gen = init_generator<float>(ck.image_channels, 0);

        struct Entry {
            std::string name;
            std::vector<int> shape;
            std::uint64_t offset = 0;
            std::uint64_t count = 0;
        };
        std::vector<Entry> entries;
        for (const json& t : header.at("tensors")) {
            check_keys(t, {"name", "shape", "offset", "count"}, "tensor entry");
            entries.push_back({t.at("name").get<std::string>(),
                               t.at("shape").get<std::vector<int>>(),
                               t.at("offset").get<std::uint64_t>(),
                               t.at("count").get<std::uint64_t>()});
        }

        for (const json& o : header.at("optimizer")) {
            check_keys(o, {"name", "step"}, "optimizer entry");
            const std::string name = o.at("name").get<std::string>();
            const auto it = std::find_if(entries.begin(), entries.end(), [&name](const Entry& e) {
                return e.name == "adam." + name + ".m";
            });
            if (it == entries.end()) {
                throw DecodeError(path + ": optimizer entry " + name + " has no moment tensors");
            }
            AdamState<float> slot;
            slot.m = Tensor<float>::zeros(it->shape);
            slot.v = Tensor<float>::zeros(it->shape);
            slot.step = o.at("step").get<std::int64_t>();
            ck.optimizer.emplace(name, std::move(slot));
        }

        const std::vector<NamedTensor> expected = named_tensors(ck);
        if (expected.size() != entries.size()) {
            throw DecodeError(path + ": tensor table has " + std::to_string(entries.size()) +
                              " entries, architecture expects " +
                              std::to_string(expected.size()));
        }

        const std::size_t blob_start = 8 + header_len;
        std::uint64_t offset = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const Entry& e = entries[i];
            const NamedTensor& x = expected[i];
            if (e.name != x.name) {
                throw DecodeError(path + ": tensor " + std::to_string(i) + " is \"" + e.name +
                                  "\", expected \"" + x.name + "\"");
            }
            if (e.shape != x.tensor->shape) {
                throw DecodeError(path + ": tensor " + e.name + " has unexpected shape");
            }
            if (e.count != static_cast<std::uint64_t>(x.tensor->numel()) || e.offset != offset) {
                throw DecodeError(path + ": tensor " + e.name + " has inconsistent layout");
            }
            const std::size_t byte_count = static_cast<std::size_t>(e.count) * sizeof(float);
            if (blob_start + e.offset + byte_count > bytes.size()) {
                throw DecodeError(path + ": truncated tensor data for " + e.name);
            }
            std::memcpy(x.tensor->data.data(), bytes.data() + blob_start + e.offset, byte_count);
            offset += byte_count;
        }
        if (blob_start + offset != bytes.size()) {
            throw DecodeError(path + ": trailing bytes after tensor data");
        }
        return ck;
    } catch (const json::exception& e) {
        throw DecodeError(path + ": malformed checkpoint header: " + e.what());
    }
}

} // namespace vitfill
