#include "nqs/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace nqs::log {
namespace {

std::atomic<Level> g_level{Level::Info};
std::mutex g_mutex;

Sink& sink_ref() {
    static Sink sink = [](Level lvl, std::string_view msg) {
        static constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
        std::cerr << "[" << kNames[static_cast<int>(lvl)] << "] " << msg << '\n';
    };
    return sink;
}

}  // namespace

void set_level(Level lvl) { g_level.store(lvl); }
Level level() { return g_level.load(); }

Sink set_sink(Sink sink) {
    std::lock_guard lock(g_mutex);
    auto previous = std::move(sink_ref());
    sink_ref() = std::move(sink);
    return previous;
}

void write(Level lvl, std::string_view message) {
    if (static_cast<int>(lvl) < static_cast<int>(g_level.load())) return;
    std::lock_guard lock(g_mutex);
    if (sink_ref()) sink_ref()(lvl, message);
}

}  // namespace nqs::log
