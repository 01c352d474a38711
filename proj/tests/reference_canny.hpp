#pragma once

// Straight-line Canny used as the oracle for glab::canny. Written against the
// textbook steps on explicitly padded planes; it shares no code with the
// library, only the arithmetic order needed for pixel-exact agreement.

#include <cmath>
#include <numbers>
#include <vector>

namespace reference {

using Plane = std::vector<std::vector<double>>;

inline Plane pad_replicate(const Plane& p, int by) {
  const int h = static_cast<int>(p.size()), w = static_cast<int>(p[0].size());
  Plane out(h + 2 * by, std::vector<double>(w + 2 * by));
  for (int r = 0; r < h + 2 * by; ++r) {
    for (int c = 0; c < w + 2 * by; ++c) {
      const int sr = r - by < 0 ? 0 : (r - by >= h ? h - 1 : r - by);
      const int sc = c - by < 0 ? 0 : (c - by >= w ? w - 1 : c - by);
      out[r][c] = p[sr][sc];
    }
  }
  return out;
}

template <int N>
Plane filter(const Plane& p, const double (&k)[N][N]) {
  const int half = N / 2;
  const Plane padded = pad_replicate(p, half);
  const int h = static_cast<int>(p.size()), w = static_cast<int>(p[0].size());
  Plane out(h, std::vector<double>(w));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) s += k[i][j] * padded[r + i][c + j];
      }
      out[r][c] = s;
    }
  }
  return out;
}

inline std::vector<char> canny(const std::vector<double>& pixels, int h, int w, double low, double high) {
  Plane img(h, std::vector<double>(w));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) img[r][c] = pixels[r * w + c];
  }

  double gauss[5][5];
  double norm = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      gauss[i][j] = std::exp(-((i - 2) * (i - 2) + (j - 2) * (j - 2)) / 2.0);
      norm += gauss[i][j];
    }
  }
  for (auto& row : gauss) {
    for (double& v : row) v /= norm;
  }
  const double sx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const double sy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

  const Plane smooth = filter(img, gauss);
  const Plane gx = filter(smooth, sx);
  const Plane gy = filter(smooth, sy);

  Plane mag(h, std::vector<double>(w));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) mag[r][c] = std::sqrt(gx[r][c] * gx[r][c] + gy[r][c] * gy[r][c]);
  }
  auto m = [&](int r, int c) { return r < 0 || c < 0 || r >= h || c >= w ? 0.0 : mag[r][c]; };

  // 0 none, 1 weak, 2 strong after non-maximum suppression
  std::vector<std::vector<int>> cls(h, std::vector<int>(w, 0));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!(mag[r][c] > low)) continue;
      double angle = std::atan2(gy[r][c], gx[r][c]) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      int dr, dc;
      if (angle >= 157.5 || angle < 22.5) {
        dr = 0, dc = 1;  // horizontal gradient
      } else if (angle < 67.5) {
        dr = 1, dc = 1;
      } else if (angle < 112.5) {
        dr = 1, dc = 0;
      } else {
        dr = 1, dc = -1;
      }
      if (mag[r][c] >= m(r + dr, c + dc) && mag[r][c] > m(r - dr, c - dc)) {
        cls[r][c] = mag[r][c] > high ? 2 : 1;
      }
    }
  }

  // Grow strong pixels into touching weak ones until nothing changes.
  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (cls[r][c] != 1) continue;
        for (int i = -1; i <= 1 && cls[r][c] == 1; ++i) {
          for (int j = -1; j <= 1; ++j) {
            const int rr = r + i, cc = c + j;
            if (rr >= 0 && cc >= 0 && rr < h && cc < w && cls[rr][cc] == 2) {
              cls[r][c] = 2;
              changed = true;
              break;
            }
          }
        }
      }
    }
  }

  std::vector<char> out(h * w, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out[r * w + c] = cls[r][c] == 2 ? 1 : 0;
  }
  return out;
}

}  // namespace reference
