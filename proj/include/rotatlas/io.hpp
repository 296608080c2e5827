#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rotatlas/error.hpp"

namespace rotatlas {

namespace fs = std::filesystem;

/// 17 significant digits, enough to round-trip any double.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes content to a sibling temp file, then renames it over path.
inline void atomic_write(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::IoError, path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, tmp.string() + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, tmp.string() + ": write failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, path.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Column-oriented CSV with a header line; every column must have the same length.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::string render() const {
    std::string s;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c) s += ',';
      s += header[c];
    }
    s += '\n';
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < columns.size(); ++c) {
        if (c) s += ',';
        s += fmt17(columns[c][r]);
      }
      s += '\n';
    }
    return s;
  }
};

inline void write_csv(const fs::path& path, const CsvTable& t) { atomic_write(path, t.render()); }

inline CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoError, path.string() + ": empty CSV");
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  }
  t.columns.assign(t.header.size(), {});
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ls, cell, ',')) {
      if (c >= t.columns.size())
        throw Error(ErrorKind::IoError, path.string() + ":" + std::to_string(row) + ": too many fields");
      try {
        t.columns[c].push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorKind::IoError, path.string() + ":" + std::to_string(row) + ": bad number '" + cell + "'");
      }
      ++c;
    }
    if (c != t.columns.size())
      throw Error(ErrorKind::IoError, path.string() + ":" + std::to_string(row) + ": expected " +
                                          std::to_string(t.columns.size()) + " fields");
  }
  return t;
}

inline const std::vector<double>& csv_column(const CsvTable& t, std::string_view name, const fs::path& path) {
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (t.header[c] == name) return t.columns[c];
  throw Error(ErrorKind::IoError, path.string() + ": missing column '" + std::string(name) + "'");
}

struct PlotLayer {
  std::string file;
  int branch = -1;  // -1: every row; otherwise rows whose third column equals branch
  std::string color;
};

/// A gnuplot script drawing theta,x[,branch] datasets over theta in [0,1) and x in [lo, hi].
inline std::string gnuplot_script(const std::string& title, const std::vector<PlotLayer>& layers, double lo,
                                  double hi, const std::string& png) {
  std::string s;
  s += "set datafile separator ','\n";
  s += "set terminal pngcairo size 1200,800\n";
  s += "set output '" + png + "'\n";
  s += "set title '" + title + "'\n";
  s += "set xlabel 'theta'\nset ylabel 'x'\n";
  s += "set xrange [0:1]\n";
  s += "set yrange [" + fmt17(lo) + ":" + fmt17(hi) + "]\n";
  s += "unset key\n";
  s += "plot ";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (i) s += ", \\\n     ";
    const std::string y = l.branch < 0 ? "2" : "($3==" + std::to_string(l.branch) + "?$2:1/0)";
    s += "'" + l.file + "' skip 1 using 1:" + y + " with dots lc rgb '" + l.color + "'";
  }
  s += "\n";
  return s;
}

}  // namespace rotatlas
