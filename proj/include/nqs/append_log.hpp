#pragma once

#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace nqs {

// Line-oriented append-only file. Each append is flushed and fsync'd
// before returning.
class AppendLog {
public:
    explicit AppendLog(std::filesystem::path path);
    ~AppendLog();

    AppendLog(const AppendLog&) = delete;
    AppendLog& operator=(const AppendLog&) = delete;

    void append(std::string_view line);

    const std::filesystem::path& path() const noexcept { return path_; }

    // Reads all nonempty lines; a missing file yields no lines.
    static std::vector<std::string> read_lines(const std::filesystem::path& path);

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::mutex mutex_;
};

}  // namespace nqs
