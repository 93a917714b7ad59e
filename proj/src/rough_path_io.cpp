#include "mvrds/rough_path.hpp"

#include <fmt/format.h>

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace mvrds {

// Layout:
//   # mvrds-roughpath 1
//   # d=<d> alpha=<a> mode=<m> seed=<s> points=<M+1> fine_cells=<f> dyadic_level=<l>
//   t x_1 .. x_d xx_11 xx_21 .. xx_dd      (one row per grid point)
// The level-2 columns on row k hold the cell [t_k, t_{k+1}] in column-major
// order; the last row repeats zeros there. Numbers use 17 significant digits.

void write_rough_path(std::ostream& os, const RoughPath& rp) {
    const long d = rp.dim();
    const auto& info = rp.info();
    os << "# mvrds-roughpath 1\n";
    os << fmt::format("# d={} alpha={:.17g} mode={} seed={} points={} fine_cells={} dyadic_level={}\n", d,
                      rp.alpha().value(), to_string(info.mode), info.seed, rp.size(), info.fine_cells, info.dyadic_level);
    const Mat& x = rp.values();
    const Mat& xx = rp.cell_second_raw();
    std::string line;
    for (std::size_t i = 0; i < rp.size(); ++i) {
        line = fmt::format("{:.17g}", rp.grid()[i]);
        for (long r = 0; r < d; ++r) line += fmt::format(" {:.17g}", x(r, static_cast<long>(i)));
        for (long r = 0; r < d * d; ++r)
            line += fmt::format(" {:.17g}", i < rp.cells() ? xx(r, static_cast<long>(i)) : 0.0);
        os << line << '\n';
    }
}

RoughPath read_rough_path(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# mvrds-roughpath", 0) != 0)
        throw std::runtime_error("not a rough path file (missing magic header)");
    if (!std::getline(is, line) || line.rfind("#", 0) != 0) throw std::runtime_error("rough path file: missing metadata line");
    std::map<std::string, std::string> kv;
    {
        std::istringstream ss(line.substr(1));
        std::string tok;
        while (ss >> tok) {
            const auto eq = tok.find('=');
            if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
    }
    for (const char* key : {"d", "alpha", "mode", "seed", "points"})
        if (!kv.count(key)) throw std::runtime_error(fmt::format("rough path file: missing key '{}'", key));
    const long d = std::stol(kv["d"]);
    const double alpha = std::strtod(kv["alpha"].c_str(), nullptr);
    const std::size_t n = std::stoul(kv["points"]);
    RoughPathInfo info;
    info.mode = lift_mode_from_string(kv["mode"]);
    info.seed = std::stoull(kv["seed"]);
    if (kv.count("fine_cells")) info.fine_cells = std::stoul(kv["fine_cells"]);
    if (kv.count("dyadic_level")) info.dyadic_level = std::stoi(kv["dyadic_level"]);
    std::vector<double> t(n);
    Mat x(d, static_cast<long>(n));
    Mat xx(d * d, static_cast<long>(n) - 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw std::runtime_error(fmt::format("rough path file: expected {} rows, got {}", n, i));
        const char* p = line.c_str();
        char* end = nullptr;
        auto next = [&]() {
            const double v = std::strtod(p, &end);
            if (end == p) throw std::runtime_error(fmt::format("rough path file: malformed row {}", i + 3));
            p = end;
            return v;
        };
        t[i] = next();
        for (long r = 0; r < d; ++r) x(r, static_cast<long>(i)) = next();
        for (long r = 0; r < d * d; ++r) {
            const double v = next();
            if (i + 1 < n) xx(r, static_cast<long>(i)) = v;
        }
    }
    return RoughPath(TimeGrid(std::move(t)), std::move(x), std::move(xx), HolderExponent(alpha), info);
}

void save_rough_path(const std::string& path, const RoughPath& rp) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_rough_path(os, rp);
}

RoughPath load_rough_path(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_rough_path(is);
}

}  // namespace mvrds
