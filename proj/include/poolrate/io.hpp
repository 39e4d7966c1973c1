#ifndef POOLRATE_IO_HPP
#define POOLRATE_IO_HPP

// Serialization boundary: JSON instance files (strict schema, unknown keys
// rejected), deterministic CSV emission, self-contained SVG line charts,
// SHA-256 hashing and the reproducibility manifest.

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolrate/errors.hpp"
#include "poolrate/instance.hpp"

namespace poolrate {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------- SHA-256

namespace detail {

struct Sha256 {
    std::array<std::uint32_t, 8> h{0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                                   0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    std::array<std::uint8_t, 64> buf{};
    std::uint64_t total = 0;
    std::size_t fill = 0;

    static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

    void block(const std::uint8_t* p) {
        static constexpr std::uint32_t K[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
            0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
            0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
            0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
            0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
            0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
            0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
            0xc67178f2};
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
                   (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
        for (int i = 16; i < 64; ++i) {
            std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6],
                      hh = h[7];
        for (int i = 0; i < 64; ++i) {
            std::uint32_t S1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            std::uint32_t ch = (e & f) ^ (~e & g);
            std::uint32_t t1 = hh + S1 + ch + K[i] + w[i];
            std::uint32_t S0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            std::uint32_t t2 = S0 + maj;
            hh = g; g = f; f = e; e = d + t1;
            d = c; c = b; b = a; a = t1 + t2;
        }
        h[0] += a; h[1] += b; h[2] += c; h[3] += d;
        h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
    }

    void update(const void* data, std::size_t len) {
        const std::uint8_t* p = static_cast<const std::uint8_t*>(data);
        total += len;
        while (len > 0) {
            std::size_t take = std::min(len, buf.size() - fill);
            std::memcpy(buf.data() + fill, p, take);
            fill += take;
            p += take;
            len -= take;
            if (fill == buf.size()) {
                block(buf.data());
                fill = 0;
            }
        }
    }

    std::string hex_digest() {
        std::uint64_t bits = total * 8;
        std::uint8_t pad = 0x80;
        update(&pad, 1);
        std::uint8_t zero = 0;
        while (fill != 56) update(&zero, 1);
        std::uint8_t len[8];
        for (int i = 0; i < 8; ++i) len[i] = std::uint8_t(bits >> (56 - 8 * i));
        update(len, 8);
        char out[65];
        for (int i = 0; i < 8; ++i) std::snprintf(out + 8 * i, 9, "%08x", h[i]);
        return std::string(out, 64);
    }
};

} // namespace detail

inline std::string sha256_hex(const std::string& bytes) {
    detail::Sha256 s;
    s.update(bytes.data(), bytes.size());
    return s.hex_digest();
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("read_file: cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("write_file: cannot open '" + path + "'");
    out << content;
    if (!out) throw ValidationError("write_file: write failed for '" + path + "'");
}

// -------------------------------------------------------- instance JSON

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::vector<std::string>& known,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ValidationError("instance " + where + ": unknown key '" + it.key() + "'");
    }
}

inline std::vector<std::string> string_array(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.empty())
        throw ValidationError("instance: '" + name + "' must be a nonempty array of strings");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw ValidationError("instance: '" + name + "' entries must be strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

inline std::vector<std::vector<double>> number_matrix(const nlohmann::json& j,
                                                      const std::string& name) {
    if (!j.is_array() || j.empty())
        throw ValidationError("instance: '" + name + "' must be a nonempty array of rows");
    std::vector<std::vector<double>> out;
    for (const auto& row : j) {
        if (!row.is_array()) throw ValidationError("instance: '" + name + "' rows must be arrays");
        std::vector<double> r;
        for (const auto& v : row) {
            if (!v.is_number()) throw ValidationError("instance: '" + name + "' entries must be numbers");
            r.push_back(v.get<double>());
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline int symbol_index(const std::vector<std::string>& alphabet, const std::string& sym,
                        const std::string& where) {
    for (std::size_t i = 0; i < alphabet.size(); ++i)
        if (alphabet[i] == sym) return static_cast<int>(i);
    throw ValidationError("instance " + where + ": unknown symbol '" + sym + "'");
}

} // namespace detail

inline ProblemInstance instance_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("instance: top level must be a JSON object");
    detail::reject_unknown_keys(
        j,
        {"x_alphabet", "y_alphabet", "w_alphabet", "h_alphabet", "p_w", "p_x_given_w",
         "p_y_given_x", "hypotheses", "algorithm", "loss", "distortion_mode", "m", "b", "n",
         "selection_mode"},
        "(top level)");
    for (const char* req : {"x_alphabet", "y_alphabet", "w_alphabet", "h_alphabet", "p_w",
                            "p_x_given_w", "p_y_given_x", "hypotheses", "algorithm", "m"})
        if (!j.contains(req)) throw ValidationError(std::string("instance: missing key '") + req + "'");

    ProblemInstance inst;
    inst.x_alphabet = detail::string_array(j.at("x_alphabet"), "x_alphabet");
    inst.y_alphabet = detail::string_array(j.at("y_alphabet"), "y_alphabet");
    inst.w_alphabet = detail::string_array(j.at("w_alphabet"), "w_alphabet");
    inst.h_alphabet = detail::string_array(j.at("h_alphabet"), "h_alphabet");

    {
        const auto& pw = j.at("p_w");
        if (!pw.is_array()) throw ValidationError("instance: 'p_w' must be an array");
        std::vector<double> w;
        for (const auto& v : pw) w.push_back(v.get<double>());
        try {
            inst.p_w = FiniteDist(std::move(w));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("instance 'p_w': ") + e.what());
        }
    }
    try {
        inst.p_x_given_w = StochKernel(detail::number_matrix(j.at("p_x_given_w"), "p_x_given_w"));
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("instance 'p_x_given_w': ") + e.what());
    }
    try {
        inst.p_y_given_x = StochKernel(detail::number_matrix(j.at("p_y_given_x"), "p_y_given_x"));
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("instance 'p_y_given_x': ") + e.what());
    }

    for (const auto& hj : j.at("hypotheses")) {
        HypothesisSpec hs;
        if (hj.is_array()) {
            // deterministic map as an array of y-symbols indexed by x
            std::vector<int> map;
            for (const auto& v : hj)
                map.push_back(detail::symbol_index(inst.y_alphabet, v.get<std::string>(),
                                                   "hypothesis map"));
            hs.map = std::move(map);
        } else if (hj.is_object()) {
            detail::reject_unknown_keys(hj, {"table"}, "hypothesis");
            hs.table = StochKernel(detail::number_matrix(hj.at("table"), "hypothesis table"));
        } else {
            throw ValidationError("instance: hypothesis entries must be arrays or {\"table\": ...}");
        }
        inst.hypotheses.push_back(std::move(hs));
    }

    {
        const auto& aj = j.at("algorithm");
        if (!aj.is_object()) throw ValidationError("instance: 'algorithm' must be an object");
        detail::reject_unknown_keys(aj, {"kind", "beta", "table"}, "algorithm");
        std::string kind = aj.at("kind").get<std::string>();
        if (kind == "erm") {
            inst.algorithm.kind = AlgoKind::Erm;
        } else if (kind == "gibbs") {
            inst.algorithm.kind = AlgoKind::Gibbs;
            inst.algorithm.beta = aj.at("beta").get<double>();
        } else if (kind == "explicit") {
            inst.algorithm.kind = AlgoKind::Explicit;
            for (auto it = aj.at("table").begin(); it != aj.at("table").end(); ++it)
                inst.algorithm.explicit_table[it.key()] = it.value().get<std::vector<double>>();
        } else {
            throw ValidationError("instance: algorithm kind must be erm, gibbs or explicit");
        }
    }

    if (j.contains("loss")) {
        const auto& lj = j.at("loss");
        if (lj.is_string()) {
            std::string s = lj.get<std::string>();
            if (s != "zero_one")
                throw ValidationError("instance: string loss must be \"zero_one\"");
            inst.loss.zero_one = true;
        } else if (lj.is_object()) {
            detail::reject_unknown_keys(lj, {"table"}, "loss");
            inst.loss.zero_one = false;
            inst.loss.table = detail::number_matrix(lj.at("table"), "loss table");
        } else {
            throw ValidationError("instance: 'loss' must be \"zero_one\" or {\"table\": ...}");
        }
    }

    if (j.contains("distortion_mode")) {
        std::string s = j.at("distortion_mode").get<std::string>();
        if (s == "expected_loss")
            inst.distortion_mode = DistortionMode::ExpectedLoss;
        else if (s == "kl")
            inst.distortion_mode = DistortionMode::Kl;
        else
            throw ValidationError("instance: distortion_mode must be expected_loss or kl");
    }
    inst.m = j.at("m").get<int>();
    if (j.contains("b")) inst.b = j.at("b").get<double>();
    if (j.contains("n")) inst.n = j.at("n").get<int>();
    if (j.contains("selection_mode")) {
        std::string s = j.at("selection_mode").get<std::string>();
        if (s == "fixed_n")
            inst.selection_mode = SelectionMode::FixedN;
        else if (s == "any_subset")
            inst.selection_mode = SelectionMode::AnySubset;
        else
            throw ValidationError("instance: selection_mode must be fixed_n or any_subset");
    }
    return inst;
}

inline ProblemInstance load_instance(const std::string& path) {
    std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("instance parse error: ") + e.what());
    }
    return instance_from_json(j);
}

inline nlohmann::json instance_to_json(const ProblemInstance& inst) {
    nlohmann::json j;
    j["x_alphabet"] = inst.x_alphabet;
    j["y_alphabet"] = inst.y_alphabet;
    j["w_alphabet"] = inst.w_alphabet;
    j["h_alphabet"] = inst.h_alphabet;
    j["p_w"] = inst.p_w.weights();
    auto kernel_rows = [](const StochKernel& k) {
        std::vector<std::vector<double>> rows;
        for (std::size_t r = 0; r < k.num_rows(); ++r) rows.push_back(k.row(r));
        return rows;
    };
    j["p_x_given_w"] = kernel_rows(inst.p_x_given_w);
    j["p_y_given_x"] = kernel_rows(inst.p_y_given_x);
    j["hypotheses"] = nlohmann::json::array();
    for (const auto& hs : inst.hypotheses) {
        if (hs.deterministic()) {
            std::vector<std::string> syms;
            for (int y : *hs.map) syms.push_back(inst.y_alphabet[static_cast<std::size_t>(y)]);
            j["hypotheses"].push_back(syms);
        } else {
            j["hypotheses"].push_back({{"table", kernel_rows(*hs.table)}});
        }
    }
    switch (inst.algorithm.kind) {
        case AlgoKind::Erm: j["algorithm"] = {{"kind", "erm"}}; break;
        case AlgoKind::Gibbs:
            j["algorithm"] = {{"kind", "gibbs"}, {"beta", inst.algorithm.beta}};
            break;
        case AlgoKind::Explicit: {
            nlohmann::json table = nlohmann::json::object();
            for (const auto& [k, v] : inst.algorithm.explicit_table) table[k] = v;
            j["algorithm"] = {{"kind", "explicit"}, {"table", table}};
            break;
        }
    }
    if (inst.loss.zero_one)
        j["loss"] = "zero_one";
    else
        j["loss"] = {{"table", inst.loss.table}};
    j["distortion_mode"] = inst.distortion_mode == DistortionMode::Kl ? "kl" : "expected_loss";
    j["m"] = inst.m;
    if (inst.b > 0.0) j["b"] = inst.b;
    if (inst.n) j["n"] = *inst.n;
    j["selection_mode"] =
        inst.selection_mode == SelectionMode::AnySubset ? "any_subset" : "fixed_n";
    return j;
}

// ---------------------------------------------------------------- CSV

// shortest round-trip decimal; '.' decimal point independent of locale
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    for (char* p = buf; *p; ++p)
        if (*p == ',') *p = '.';
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string serialize() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) os << ',';
            os << header[i];
        }
        os << '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) os << ',';
                os << row[i];
            }
            os << '\n';
        }
        return os.str();
    }
};

// ---------------------------------------------------------------- SVG

// Minimal deterministic line chart; inline styling only, no timestamps.
struct SvgSeries {
    std::string label;
    std::string color = "#1f6feb";
    std::vector<std::pair<double, double>> points;
};

inline std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                                  const std::string& ylabel,
                                  const std::vector<SvgSeries>& series) {
    const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, x); xmax = std::max(xmax, x);
            ymin = std::min(ymin, y); ymax = std::max(ymax, y);
        }
    if (xmin > xmax) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; }
    if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
    if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"16\">" << title << "</text>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
       << H - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double x = xmin + (xmax - xmin) * i / 4.0;
        double y = ymin + (ymax - ymin) * i / 4.0;
        os << "<text x=\"" << px(x) << "\" y=\"" << H - mb + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
           << fmt_double(std::round(x * 1e6) / 1e6) << "</text>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << py(y) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
           << fmt_double(std::round(y * 1e6) / 1e6) << "</text>\n";
    }
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xlabel
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << (mt + H - mb) / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
          "transform=\"rotate(-90 16 " << (mt + H - mb) / 2 << ")\">" << ylabel << "</text>\n";
    double ly = mt + 4;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : s.points) os << px(x) << ',' << py(y) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << W - mr - 6 << "\" y=\"" << ly
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
           << s.color << "\">" << s.label << "</text>\n";
        ly += 14;
    }
    os << "</svg>\n";
    return os.str();
}

// ------------------------------------------------------------- manifest

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string instance_hash;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t root_seed = 0;
    std::string started;
    std::string finished;
    std::vector<std::string> outputs;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["tool_version"] = tool_version;
        j["instance_sha256"] = instance_hash;
        j["config"] = config;
        j["root_seed"] = root_seed;
        j["started"] = started;
        j["finished"] = finished;
        j["outputs"] = outputs;
        return j;
    }
};

} // namespace poolrate

#endif
