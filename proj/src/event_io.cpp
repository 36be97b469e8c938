#include "sparta/event_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

#include "sparta/rng.hpp"

namespace sparta {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'K', '1'};

uint16_t read_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t read_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void append_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void check_event_range(const Event& e, uint16_t width, uint16_t height, size_t record) {
    if (e.x >= width || e.y >= height)
        throw ValidationError("event record " + std::to_string(record) + ": coordinate (" +
                              std::to_string(e.x) + "," + std::to_string(e.y) +
                              ") outside geometry " + std::to_string(width) + "x" +
                              std::to_string(height));
    if (e.polarity > 1)
        throw ValidationError("event record " + std::to_string(record) + ": polarity " +
                              std::to_string(e.polarity) + " not in {0,1}");
}

} // namespace

EventStream parse_spk1(const std::string& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("not an SPK1 file: bad magic or truncated header");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    EventStream stream;
    stream.width = read_u16(p + 4);
    stream.height = read_u16(p + 6);
    const uint32_t count = read_u32(p + 8);
    const size_t expected = 12 + static_cast<size_t>(count) * 9;
    if (bytes.size() != expected)
        throw FormatError("SPK1 payload size mismatch: header declares " + std::to_string(count) +
                          " records (" + std::to_string(expected) + " bytes), file has " +
                          std::to_string(bytes.size()));
    stream.events.reserve(count);
    uint32_t prev_t = 0;
    for (uint32_t i = 0; i < count; ++i) {
        const unsigned char* r = p + 12 + static_cast<size_t>(i) * 9;
        Event e;
        e.t = read_u32(r);
        e.x = read_u16(r + 4);
        e.y = read_u16(r + 6);
        e.polarity = r[8];
        check_event_range(e, stream.width, stream.height, i);
        if (i > 0 && e.t < prev_t)
            throw ValidationError("event record " + std::to_string(i) +
                                  ": timestamp decreases in binary stream");
        prev_t = e.t;
        stream.events.push_back(e);
    }
    return stream;
}

std::string serialize_spk1(const EventStream& stream) {
    std::string out;
    out.reserve(12 + stream.events.size() * 9);
    out.append(kMagic, 4);
    append_u16(out, stream.width);
    append_u16(out, stream.height);
    append_u32(out, static_cast<uint32_t>(stream.events.size()));
    for (const Event& e : stream.events) {
        append_u32(out, e.t);
        append_u16(out, e.x);
        append_u16(out, e.y);
        out.push_back(static_cast<char>(e.polarity));
    }
    return out;
}

EventStream parse_csv(const std::string& bytes, std::optional<Geometry> geometry) {
    size_t pos = 0;
    auto next_line = [&]() -> std::optional<std::string_view> {
        if (pos >= bytes.size()) return std::nullopt;
        size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) end = bytes.size();
        std::string_view line(bytes.data() + pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        return line;
    };

    auto header = next_line();
    if (!header || *header != "t,x,y,p")
        throw FormatError("CSV event file must start with header \"t,x,y,p\"");

    EventStream stream;
    size_t record = 0;
    while (auto line = next_line()) {
        if (line->empty()) continue;
        long long fields[4];
        const char* cur = line->data();
        const char* end = line->data() + line->size();
        for (int f = 0; f < 4; ++f) {
            auto [ptr, ec] = std::from_chars(cur, end, fields[f]);
            if (ec != std::errc{} || (f < 3 && (ptr == end || *ptr != ',')) ||
                (f == 3 && ptr != end))
                throw FormatError("CSV record " + std::to_string(record) + ": malformed line");
            cur = ptr + 1;
        }
        if (fields[0] < 0 || fields[0] > 0xffffffffLL)
            throw ValidationError("event record " + std::to_string(record) +
                                  ": timestamp out of range");
        if (fields[1] < 0 || fields[1] > 0xffff || fields[2] < 0 || fields[2] > 0xffff ||
            fields[3] < 0 || fields[3] > 1)
            throw ValidationError("event record " + std::to_string(record) +
                                  ": field out of range");
        Event e;
        e.t = static_cast<uint32_t>(fields[0]);
        e.x = static_cast<uint16_t>(fields[1]);
        e.y = static_cast<uint16_t>(fields[2]);
        e.polarity = static_cast<uint8_t>(fields[3]);
        stream.events.push_back(e);
        ++record;
    }

    if (geometry) {
        stream.width = geometry->width;
        stream.height = geometry->height;
    } else {
        uint16_t w = 0, h = 0;
        for (const Event& e : stream.events) {
            w = std::max<uint16_t>(w, e.x + 1);
            h = std::max<uint16_t>(h, e.y + 1);
        }
        stream.width = std::max<uint16_t>(w, 1);
        stream.height = std::max<uint16_t>(h, 1);
    }
    for (size_t i = 0; i < stream.events.size(); ++i)
        check_event_range(stream.events[i], stream.width, stream.height, i);
    std::stable_sort(stream.events.begin(), stream.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    return stream;
}

EventStream parse_event_file(const std::string& bytes, std::optional<Geometry> csv_geometry) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) return parse_spk1(bytes);
    return parse_csv(bytes, csv_geometry);
}

EventStream synth_moving_bar(Geometry geometry, double velocity_px_s, double duration_s,
                             double noise_rate_hz, uint64_t seed) {
    if (geometry.width == 0 || geometry.height == 0)
        throw ValidationError("synth_moving_bar: zero-area geometry");
    if (!(duration_s > 0.0)) throw ValidationError("synth_moving_bar: duration must be positive");
    if (noise_rate_hz < 0.0) throw ValidationError("synth_moving_bar: negative noise rate");

    const auto duration_us = static_cast<uint64_t>(std::llround(duration_s * 1e6));
    EventStream stream;
    stream.width = geometry.width;
    stream.height = geometry.height;

    // Appearance transient: the bar shows up at column 0.
    for (uint16_t y = 0; y < geometry.height; ++y)
        stream.events.push_back({0, 0, y, 1});

    if (velocity_px_s > 0.0) {
        for (uint64_t step = 1;; ++step) {
            const double t_s = static_cast<double>(step) / velocity_px_s;
            const auto t_us = static_cast<uint64_t>(std::llround(t_s * 1e6));
            if (t_us >= duration_us || t_us > 0xffffffffULL) break;
            const auto lead = static_cast<uint16_t>(step % geometry.width);
            const auto trail = static_cast<uint16_t>((step - 1) % geometry.width);
            for (uint16_t y = 0; y < geometry.height; ++y) {
                stream.events.push_back({static_cast<uint32_t>(t_us), lead, y, 1});
                stream.events.push_back({static_cast<uint32_t>(t_us), trail, y, 0});
            }
        }
    }

    if (noise_rate_hz > 0.0) {
        Rng rng(seed);
        const double lambda = noise_rate_hz * duration_s;
        for (uint16_t y = 0; y < geometry.height; ++y) {
            for (uint16_t x = 0; x < geometry.width; ++x) {
                const uint64_t n = rng.poisson(lambda);
                for (uint64_t i = 0; i < n; ++i) {
                    const auto t = static_cast<uint32_t>(rng.uniform_u64(duration_us));
                    const auto p = static_cast<uint8_t>(rng.bernoulli(0.5) ? 1 : 0);
                    stream.events.push_back({t, x, y, p});
                }
            }
        }
    }

    std::stable_sort(stream.events.begin(), stream.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    return stream;
}

SpikeTensor bin_to_frames(const EventStream& stream, int timesteps, int h_out, int w_out) {
    require(timesteps >= 1, "bin_to_frames: timestep count must be >= 1");
    require(h_out >= 1 && w_out >= 1, "bin_to_frames: output geometry must be positive");
    require(stream.height % h_out == 0 && stream.width % w_out == 0,
            "bin_to_frames: output geometry " + std::to_string(w_out) + "x" +
                std::to_string(h_out) + " does not divide sensor geometry " +
                std::to_string(stream.width) + "x" + std::to_string(stream.height));

    SpikeTensor frames(timesteps, 2, h_out, w_out);
    if (stream.events.empty()) return frames;

    const uint64_t t_min = stream.events.front().t;
    const uint64_t t_max = stream.events.back().t;
    const uint64_t span = t_max - t_min + 1;
    const int block_y = stream.height / h_out;
    const int block_x = stream.width / w_out;

    for (const Event& e : stream.events) {
        auto bin = static_cast<int>(static_cast<uint64_t>(timesteps) * (e.t - t_min) / span);
        bin = std::min(bin, timesteps - 1);
        const int y = e.y / block_y;
        const int x = e.x / block_x;
        frames.at(bin, e.polarity, y, x) = 1;
    }
    return frames;
}

EventStream shift_time(const EventStream& stream, uint32_t offset_us) {
    EventStream out = stream;
    for (Event& e : out.events) e.t += offset_us;
    return out;
}

EventStream merge_streams(const EventStream& a, const EventStream& b) {
    require(a.width == b.width && a.height == b.height,
            "merge_streams: geometry mismatch");
    EventStream out;
    out.width = a.width;
    out.height = a.height;
    out.events.resize(a.events.size() + b.events.size());
    std::merge(a.events.begin(), a.events.end(), b.events.begin(), b.events.end(),
               out.events.begin(), [](const Event& x, const Event& y) { return x.t < y.t; });
    return out;
}

EventStream shift_space(const EventStream& stream, uint16_t dx, uint16_t dy, Geometry target) {
    require(stream.width + dx <= target.width && stream.height + dy <= target.height,
            "shift_space: shifted stream exceeds target geometry");
    EventStream out;
    out.width = target.width;
    out.height = target.height;
    out.events = stream.events;
    for (Event& e : out.events) {
        e.x = static_cast<uint16_t>(e.x + dx);
        e.y = static_cast<uint16_t>(e.y + dy);
    }
    return out;
}

} // namespace sparta
