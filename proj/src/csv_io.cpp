#include "otalign/csv_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "otalign/error.hpp"

namespace otalign {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

double parse_double(std::string_view cell) {
    std::string s(trim(cell));
    if (s.empty()) throw ParseError("empty numeric cell");
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) {
        throw ParseError("bad numeric cell: '" + s + "'");
    }
    return v;
}

long long parse_int(std::string_view cell) {
    std::string s(trim(cell));
    if (s.empty()) throw ParseError("empty integer cell");
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || errno == ERANGE) {
        throw ParseError("bad integer cell: '" + s + "'");
    }
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

void write_text(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    std::vector<Vector> rows;
    for (const auto& line : lines) {
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        Vector row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_double(c));
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError("ragged row in " + path.string());
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("no data rows in " + path.string());
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    }
    if (!m.all_finite()) throw ParseError("non-finite entry in " + path.string());
    return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    std::ostringstream out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
    write_text(path, out.str());
}

} // namespace otalign
