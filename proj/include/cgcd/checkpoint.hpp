#pragma once

// Checkpoint layout (little-endian):
//   "CGCK" | version u32 = 1 | header length u32 | JSON header (UTF-8) |
//   float32 payload: head weight, proxies, head Adam m, v, proxy Adam m, v,
//   exemplar centers, exemplar sigma (each row-major, sizes in the header).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgcd/emb1.hpp"
#include "cgcd/errors.hpp"
#include "cgcd/evaluation.hpp"
#include "cgcd/replay_distill.hpp"
#include "cgcd/training.hpp"

namespace cgcd {

struct Checkpoint {
    int step_index = 0;
    ModelState model;
    Exemplar exemplar;
    std::vector<StepReport> reports;  // reports of steps 0..step_index
    nlohmann::json hyperparams = nlohmann::json::object();

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Round every stored tensor to float32 so that a written checkpoint reloads
// to exactly the in-memory state.
inline void round_to_checkpoint_precision(ModelState& m) {
    round_to_float32(m.head.weight);
    round_to_float32(m.bank.proxies);
    round_to_float32(m.head_opt.m);
    round_to_float32(m.head_opt.v);
    round_to_float32(m.proxy_opt.m);
    round_to_float32(m.proxy_opt.v);
}

inline void round_to_checkpoint_precision(Exemplar& e) {
    round_to_float32(e.centers);
    round_to_float32(e.sigma);
}

namespace detail {

inline void put_floats(std::vector<char>& buf, const std::vector<double>& v) {
    for (double x : v) put<float>(buf, static_cast<float>(x));
}

inline std::vector<double> take_floats(const std::vector<char>& buf, std::size_t& off, std::size_t n) {
    if (off + n * 4 > buf.size()) throw DataError("checkpoint: truncated payload");
    std::vector<double> v(n);
    for (auto& x : v) {
        x = static_cast<double>(get<float>(buf, off));
        off += 4;
    }
    return v;
}

inline nlohmann::json adam_json(const AdamWState& s) {
    return {{"step", s.step}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps}, {"size", s.m.size()}};
}

}  // namespace detail

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
    const auto& m = ck.model;
    nlohmann::json h;
    h["step_index"] = ck.step_index;
    h["d_in"] = m.head.in_dim();
    h["d_emb"] = m.head.out_dim();
    h["num_proxies"] = m.bank.size();
    h["class_ids"] = m.bank.class_ids;
    h["head_opt"] = detail::adam_json(m.head_opt);
    h["proxy_opt"] = detail::adam_json(m.proxy_opt);
    h["exemplar_class_ids"] = ck.exemplar.class_ids;
    h["hyperparams"] = ck.hyperparams;
    h["reports"] = nlohmann::json::array();
    for (const auto& r : ck.reports) h["reports"].push_back(to_json(r));
    const std::string header = h.dump();

    std::vector<char> buf{'C', 'G', 'C', 'K'};
    detail::put<std::uint32_t>(buf, 1);
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(header.size()));
    buf.insert(buf.end(), header.begin(), header.end());
    detail::put_floats(buf, m.head.weight.data());
    detail::put_floats(buf, m.bank.proxies.data());
    detail::put_floats(buf, m.head_opt.m);
    detail::put_floats(buf, m.head_opt.v);
    detail::put_floats(buf, m.proxy_opt.m);
    detail::put_floats(buf, m.proxy_opt.v);
    detail::put_floats(buf, ck.exemplar.centers.data());
    detail::put_floats(buf, ck.exemplar.sigma.data());
    return buf;
}

inline Checkpoint decode_checkpoint(const std::vector<char>& buf) {
    if (buf.size() < 12 || std::string(buf.begin(), buf.begin() + 4) != "CGCK") {
        throw DataError("checkpoint: bad magic");
    }
    if (detail::get<std::uint32_t>(buf, 4) != 1) throw DataError("checkpoint: unsupported version");
    const auto hlen = detail::get<std::uint32_t>(buf, 8);
    if (12 + static_cast<std::size_t>(hlen) > buf.size()) throw DataError("checkpoint: truncated header");

    Checkpoint ck;
    std::size_t off = 12 + hlen;
    try {
        const auto h = nlohmann::json::parse(buf.begin() + 12, buf.begin() + 12 + hlen);
        ck.step_index = h.at("step_index").get<int>();
        const auto d_in = h.at("d_in").get<std::size_t>();
        const auto d_emb = h.at("d_emb").get<std::size_t>();
        const auto c = h.at("num_proxies").get<std::size_t>();
        ck.hyperparams = h.value("hyperparams", nlohmann::json::object());

        auto& m = ck.model;
        m.head.weight = Matrix(d_emb, d_in, detail::take_floats(buf, off, d_emb * d_in));
        m.bank.proxies = Matrix(c, d_emb, detail::take_floats(buf, off, c * d_emb));
        m.bank.class_ids = h.at("class_ids").get<std::vector<int>>();

        auto read_adam = [&](const nlohmann::json& j, AdamWState& s) {
            const auto n = j.at("size").get<std::size_t>();
            s.step = j.at("step").get<std::int64_t>();
            s.beta1 = j.at("beta1").get<double>();
            s.beta2 = j.at("beta2").get<double>();
            s.eps = j.at("eps").get<double>();
            s.m = detail::take_floats(buf, off, n);
            s.v = detail::take_floats(buf, off, n);
        };
        read_adam(h.at("head_opt"), m.head_opt);
        read_adam(h.at("proxy_opt"), m.proxy_opt);

        ck.exemplar.class_ids = h.at("exemplar_class_ids").get<std::vector<int>>();
        const std::size_t k = ck.exemplar.class_ids.size();
        ck.exemplar.centers = Matrix(k, d_emb, detail::take_floats(buf, off, k * d_emb));
        ck.exemplar.sigma = Matrix(k, d_emb, detail::take_floats(buf, off, k * d_emb));
        for (const auto& r : h.at("reports")) ck.reports.push_back(step_report_from_json(r));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint header: ") + e.what());
    }
    if (off != buf.size()) throw DataError("checkpoint: trailing bytes");
    ck.model.bank.validate();
    return ck;
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    const auto buf = encode_checkpoint(ck);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::read_all(path)); }

}  // namespace cgcd
