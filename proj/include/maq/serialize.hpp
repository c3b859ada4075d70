#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "maq/net.hpp"

namespace maq {

// Text helpers shared by the checkpoint formats. Layout is line-oriented;
// every real is written with full round-trip precision.

inline void write_vector_line(std::ostream& os, const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) os << ' ';
        os << fmt_real(v[i]);
    }
    os << '\n';
}

inline void write_matrix_lines(std::ostream& os, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) os << ' ';
            os << fmt_real(m(r, c));
        }
        os << '\n';
    }
}

inline std::string next_line(std::istream& is, const std::string& where) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("truncated checkpoint at " + where);
    return line;
}

inline Vec read_vector_line(std::istream& is, Eigen::Index n, const std::string& where) {
    const auto tok = split_ws(next_line(is, where));
    if (static_cast<Eigen::Index>(tok.size()) != n)
        throw ParseError(where + ": expected " + std::to_string(n) + " values, got " + std::to_string(tok.size()));
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = parse_real(tok[i]);
    return v;
}

inline Mat read_matrix_lines(std::istream& is, Eigen::Index rows, Eigen::Index cols, const std::string& where) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        m.row(r) = read_vector_line(is, cols, where + " row " + std::to_string(r)).transpose();
    return m;
}

inline void write_net(std::ostream& os, const std::string& name, const DenseNet& net) {
    os << "net " << name << " sizes=";
    const auto sizes = net.layer_sizes();
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) os << ',';
        os << sizes[i];
    }
    os << " hidden=" << act_name(net.hidden_act) << " output=" << act_name(net.output_act) << '\n';
    for (int l = 0; l < net.layer_count(); ++l) {
        write_matrix_lines(os, net.weights[l]);
        write_vector_line(os, net.biases[l]);
    }
}

inline DenseNet read_net(std::istream& is, const std::string& expected_name) {
    const std::string where = "net " + expected_name;
    const auto tok = split_ws(next_line(is, where));
    if (tok.size() != 5 || tok[0] != "net" || tok[1] != expected_name)
        throw ParseError(where + ": malformed or misordered net header");
    const std::string_view sizes_kv = tok[2], hidden_kv = tok[3], output_kv = tok[4];
    if (!sizes_kv.starts_with("sizes=") || !hidden_kv.starts_with("hidden=") || !output_kv.starts_with("output="))
        throw ParseError(where + ": malformed net header fields");

    std::vector<int> sizes;
    {
        std::string list(sizes_kv.substr(6));
        std::stringstream ss(list);
        std::string item;
        while (std::getline(ss, item, ',')) sizes.push_back(static_cast<int>(parse_int(item)));
    }
    if (sizes.size() < 2) throw ParseError(where + ": needs at least two layer sizes");

    DenseNet net;
    net.hidden_act = act_from_name(hidden_kv.substr(7));
    net.output_act = act_from_name(output_kv.substr(7));
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        net.weights.push_back(
            read_matrix_lines(is, sizes[l + 1], sizes[l], where + " layer " + std::to_string(l) + " weights"));
        net.biases.push_back(read_vector_line(is, sizes[l + 1], where + " layer " + std::to_string(l) + " bias"));
    }
    return net;
}

}  // namespace maq
