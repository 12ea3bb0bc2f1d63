#include "mesorisk/matrix_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mesorisk/error.hpp"

namespace mesorisk {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'K', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("truncated MRK1 stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
    std::ofstream out(path, std::ios::out | std::ios::trunc | mode);
    if (!out) throw UsageError("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace

std::string format_double(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& column_labels) {
    if (!column_labels.empty()) {
        for (std::size_t j = 0; j < column_labels.size(); ++j)
            out << (j ? "," : "") << column_labels[j];
        out << '\n';
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
        out << '\n';
    }
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& column_labels) {
    auto out = open_out(path);
    write_matrix_csv(out, m, column_labels);
}

void write_matrix_binary(std::ostream& out, const Eigen::MatrixXd& m) {
    out.write(kMagic, 4);
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
}

void write_matrix_binary(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    auto out = open_out(path, std::ios::binary);
    write_matrix_binary(out, m);
}

Eigen::MatrixXd read_matrix_binary(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not an MRK1 matrix stream");
    const auto rows = get_u64(in);
    const auto cols = get_u64(in);
    if (rows > (1u << 20) || cols > (1u << 20)) throw DataError("implausible MRK1 dimensions");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = std::bit_cast<double>(get_u64(in));
    return m;
}

Eigen::MatrixXd read_matrix_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open '" + path.string() + "'");
    return read_matrix_binary(in);
}

}  // namespace mesorisk
