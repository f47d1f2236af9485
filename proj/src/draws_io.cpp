#include "hanam/draws_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

#include "hanam/errors.hpp"

namespace hanam {

std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_field(std::string_view field, const std::string& source, std::size_t line_no) {
  field = trim(field);
  T value{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    std::ostringstream msg;
    msg << source << ":" << line_no << ": cannot parse '" << field << "' as a number";
    fail(ErrorKind::Parse, msg.str());
  }
  return value;
}

}  // namespace

std::string write_draws_string(const LatentDraws& draws) {
  draws.validate();
  std::string out;
  out += std::to_string(draws.n()) + "," + std::to_string(draws.D()) + "," +
         std::to_string(draws.K()) + "\n";
  for (const Matrix& u : draws.draws) {
    for (Index i = 0; i < u.rows(); ++i) {
      for (Index d = 0; d < u.cols(); ++d) {
        if (d) out += ',';
        out += format_number(u(i, d));
      }
      out += '\n';
    }
  }
  return out;
}

LatentDraws parse_draws(std::string_view text, const std::string& source) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) fail(ErrorKind::Parse, source + ": empty draws file");
  const auto header = split_commas(line);
  if (header.size() != 3) {
    std::ostringstream msg;
    msg << source << ":1: expected header 'n,D,K', got '" << line << "'";
    fail(ErrorKind::Parse, msg.str());
  }
  const auto n = parse_field<long long>(header[0], source, 1);
  const auto D = parse_field<long long>(header[1], source, 1);
  const auto K = parse_field<long long>(header[2], source, 1);
  if (n < 1 || D < 1 || K < 2) {
    std::ostringstream msg;
    msg << source << ":1: invalid shape n=" << n << " D=" << D << " K=" << K << " (need n,D >= 1, K >= 2)";
    fail(ErrorKind::BadShape, msg.str());
  }

  LatentDraws out;
  out.draws.reserve(static_cast<std::size_t>(K));
  for (long long k = 0; k < K; ++k) {
    Matrix u(n, D);
    for (long long i = 0; i < n; ++i) {
      if (!next_line(line)) {
        std::ostringstream msg;
        msg << source << ":" << line_no + 1 << ": unexpected end of file in draw " << k + 1 << " of " << K
            << " (expected " << n << " rows of " << D << " values per draw)";
        fail(ErrorKind::BadShape, msg.str());
      }
      const auto fields = split_commas(line);
      if (static_cast<long long>(fields.size()) != D) {
        std::ostringstream msg;
        msg << source << ":" << line_no << ": expected " << D << " values, found " << fields.size();
        fail(ErrorKind::BadShape, msg.str());
      }
      for (long long d = 0; d < D; ++d) u(i, d) = parse_field<double>(fields[static_cast<std::size_t>(d)], source, line_no);
    }
    out.draws.push_back(std::move(u));
  }
  while (next_line(line)) {
    if (!trim(line).empty()) {
      std::ostringstream msg;
      msg << source << ":" << line_no << ": trailing data after " << K << " draws of shape " << n << "x" << D;
      fail(ErrorKind::BadShape, msg.str());
    }
  }
  out.validate();
  return out;
}

LatentDraws read_draws(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open draws file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_draws(ss.str(), path.string());
}

void write_draws(const std::filesystem::path& path, const LatentDraws& draws) {
  write_file_atomic(path, write_draws_string(draws));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace hanam
