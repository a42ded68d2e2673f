#include "wost/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace wost {

std::vector<Vec2> SolutionImage::cell_centers() const {
  std::vector<Vec2> pts;
  pts.reserve(static_cast<size_t>(width) * height);
  for (int j = 0; j < height; ++j)
    for (int i = 0; i < width; ++i) pts.push_back(cell_center(i, j));
  return pts;
}

SolutionImage make_image(int width, int height, const Bbox& bbox) {
  SolutionImage img;
  img.width = width;
  img.height = height;
  img.bbox = bbox;
  img.cells.assign(static_cast<size_t>(width) * height, PointStats{});
  return img;
}

namespace {

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(const SolutionImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  out << "# width=" << img.width << " height=" << img.height << " bbox="
      << fmt_double(img.bbox.min.x) << "," << fmt_double(img.bbox.min.y) << ","
      << fmt_double(img.bbox.max.x) << "," << fmt_double(img.bbox.max.y)
      << "\n";
  out << "i,j,mean,var,count\n";
  for (int j = 0; j < img.height; ++j) {
    for (int i = 0; i < img.width; ++i) {
      const PointStats& s = img.at(i, j);
      out << i << "," << j << "," << fmt_double(s.mean) << ","
          << fmt_double(s.variance_of_mean()) << "," << s.count << "\n";
    }
  }
  if (!out) io_fail(path, "write failed");
}

SolutionImage read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) io_fail(path, "cannot open");
  std::string header;
  std::getline(in, header);
  SolutionImage img;
  double x0, y0, x1, y1;
  if (std::sscanf(header.c_str(), "# width=%d height=%d bbox=%lf,%lf,%lf,%lf",
                  &img.width, &img.height, &x0, &y0, &x1, &y1) != 6)
    io_fail(path, "bad csv header");
  img.bbox = Bbox{{x0, y0}, {x1, y1}};
  img.cells.assign(static_cast<size_t>(img.width) * img.height, PointStats{});
  std::string line;
  std::getline(in, line);  // column names
  while (std::getline(in, line)) {
    int i, j;
    double mean, var;
    long long count;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lld", &i, &j, &mean, &var,
                    &count) != 5)
      io_fail(path, "bad csv row: " + line);
    PointStats& s = img.at(i, j);
    s.mean = mean;
    s.count = count;
    // reconstruct m2 so variance_of_mean round-trips
    s.m2 = count > 1 ? var * static_cast<double>(count) * (count - 1) : 0.0;
  }
  return img;
}

void write_pfm(const SolutionImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  out << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
  // PFM stores rows bottom-to-top; our row 0 is already at bbox.min.y
  for (int j = 0; j < img.height; ++j) {
    for (int i = 0; i < img.width; ++i) {
      float v = static_cast<float>(img.at(i, j).mean);
      out.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  }
  if (!out) io_fail(path, "write failed");
}

SolutionImage read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::string magic;
  in >> magic;
  if (magic != "Pf") io_fail(path, "not a grayscale PFM");
  int w, h;
  double scale;
  in >> w >> h >> scale;
  in.get();  // newline before the raster
  if (scale >= 0.0) io_fail(path, "big-endian PFM is not supported");
  SolutionImage img = make_image(w, h, Bbox{{0, 0}, {1, 1}});
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      float v;
      in.read(reinterpret_cast<char*>(&v), sizeof(float));
      img.at(i, j).mean = v;
      img.at(i, j).count = 1;
    }
  }
  if (!in) io_fail(path, "truncated PFM");
  return img;
}

namespace {

void put_be32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

void png_chunk(std::ofstream& out, const char type[4], const std::string& data) {
  std::string buf;
  put_be32(buf, static_cast<uint32_t>(data.size()));
  buf.append(type, 4);
  buf += data;
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data() + 4),
            static_cast<uInt>(buf.size() - 4)));
  put_be32(buf, crc);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void write_png(const SolutionImage& img, const std::string& path,
               double range_min, double range_max) {
  if (range_min == range_max) {
    range_min = kInf;
    range_max = -kInf;
    for (const PointStats& s : img.cells) {
      range_min = std::min(range_min, s.mean);
      range_max = std::max(range_max, s.mean);
    }
    if (range_min >= range_max) range_max = range_min + 1.0;
  }

  // filter byte 0 per scanline, 8-bit gray, top row first
  std::string raster;
  raster.reserve(static_cast<size_t>(img.height) * (img.width + 1));
  for (int j = img.height - 1; j >= 0; --j) {
    raster.push_back('\0');
    for (int i = 0; i < img.width; ++i) {
      double t = (img.at(i, j).mean - range_min) / (range_max - range_min);
      int v = static_cast<int>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
      raster.push_back(static_cast<char>(v));
    }
  }

  uLongf bound = compressBound(static_cast<uLong>(raster.size()));
  std::string compressed(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                reinterpret_cast<const Bytef*>(raster.data()),
                static_cast<uLong>(raster.size()), 9) != Z_OK)
    io_fail(path, "deflate failed");
  compressed.resize(bound);

  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                       '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<uint32_t>(img.width));
  put_be32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(0);   // grayscale
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", compressed);
  png_chunk(out, "IEND", "");
  if (!out) io_fail(path, "write failed");

  nlohmann::json sidecar;
  sidecar["tonemap"] = {{"min", range_min}, {"max", range_max}};
  std::ofstream side(path + ".json");
  side << sidecar.dump(2) << "\n";
}

double compute_relmse(const SolutionImage& est, const SolutionImage& ref) {
  if (est.width != ref.width || est.height != ref.height)
    throw std::invalid_argument("compute_relmse: image dimensions differ");
  double max_abs = 0.0;
  for (const PointStats& s : ref.cells)
    max_abs = std::max(max_abs, std::abs(s.mean));
  double delta = 0.0001 * max_abs * max_abs;  // (0.01 * max|ref|)^2
  double sum = 0.0;
  for (size_t i = 0; i < est.cells.size(); ++i) {
    double d = est.cells[i].mean - ref.cells[i].mean;
    double r = ref.cells[i].mean;
    double denom = r * r + delta;
    if (denom <= 0.0) {
      if (d != 0.0) return kInf;
      continue;
    }
    sum += d * d / denom;
  }
  return sum / static_cast<double>(est.cells.size());
}

}  // namespace wost
