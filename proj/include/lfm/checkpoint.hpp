#pragma once

// Binary checkpoint:
//   8 bytes   magic "LFMCKPT1"
//   8 bytes   header length L (little-endian uint64)
//   L bytes   JSON header (resolved run config, architecture, step count)
//   P doubles model parameters, little-endian IEEE-754
//   P doubles EMA shadow, present when the header says so

#include "lfm/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lfm {

struct Checkpoint {
    RunConfig config;
    VelocityModel model;
    std::optional<Vector> ema;
    std::size_t steps_done = 0;

    /// The weights used for sampling and evaluation.
    [[nodiscard]] VelocityModel inference_model() const {
        if (!ema) return model;
        return {model.architecture(), *ema};
    }
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'L', 'F', 'M', 'C', 'K', 'P', 'T', '1'};

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
    out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw InvalidArgument("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return v;
}

inline void put_doubles(std::ostream& out, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(v[i]));
}

inline Vector get_doubles(std::istream& in, std::size_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::bit_cast<double>(get_u64(in));
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const auto& arch = ck.model.architecture();
    json header = {
        {"config", to_json(ck.config)},
        {"architecture", {{"dim", arch.dim}, {"width", arch.width}, {"depth", arch.depth}}},
        {"parameter_count", ck.model.parameter_count()},
        {"steps_done", ck.steps_done},
        {"has_ema", ck.ema.has_value()},
    };
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + path);
    out.write(detail::kCheckpointMagic, 8);
    detail::put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    detail::put_doubles(out, ck.model.parameters());
    if (ck.ema) {
        require(static_cast<std::size_t>(ck.ema->size()) == ck.model.parameter_count(), "checkpoint: EMA size mismatch");
        detail::put_doubles(out, *ck.ema);
    }
    if (!out) throw InvalidArgument("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) throw InvalidArgument(path + ": not a checkpoint file");
    const std::uint64_t len = detail::get_u64(in);
    require(len < (1u << 26), path + ": implausible header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw InvalidArgument(path + ": truncated header");
    const json header = parse_json_text(text, path);

    Checkpoint ck;
    ck.config = run_config_from_json(header.at("config"));
    const auto& a = header.at("architecture");
    const Architecture arch{a.at("dim").get<std::size_t>(), a.at("width").get<std::size_t>(), a.at("depth").get<std::size_t>()};
    const auto count = header.at("parameter_count").get<std::size_t>();
    require(count == arch.parameter_count(), path + ": parameter count does not match the architecture");
    ck.steps_done = header.at("steps_done").get<std::size_t>();
    ck.model = VelocityModel(arch, detail::get_doubles(in, count));
    if (header.at("has_ema").get<bool>()) ck.ema = detail::get_doubles(in, count);
    if (in.peek() != std::char_traits<char>::eof()) throw InvalidArgument(path + ": trailing bytes");
    return ck;
}

}  // namespace lfm
