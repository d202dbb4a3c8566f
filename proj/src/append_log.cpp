#include "nqs/append_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "nqs/error.hpp"
#include "nqs/text.hpp"

namespace nqs {

AppendLog::AppendLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) {
        std::filesystem::create_directories(path_.parent_path());
    }
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw Error(ErrorCode::Io, "cannot open " + path_.string() + ": " + std::strerror(errno));
    }
}

AppendLog::~AppendLog() {
    if (fd_ >= 0) ::close(fd_);
}

void AppendLog::append(std::string_view line) {
    std::string buffer(line);
    buffer.push_back('\n');
    std::lock_guard lock(mutex_);
    std::size_t written = 0;
    while (written < buffer.size()) {
        const auto n = ::write(fd_, buffer.data() + written, buffer.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::Io, "write to " + path_.string() + " failed: " + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) {
        throw Error(ErrorCode::Io, "fsync " + path_.string() + " failed: " + std::strerror(errno));
    }
}

std::vector<std::string> AppendLog::read_lines(const std::filesystem::path& path) {
    std::vector<std::string> lines;
    std::ifstream in(path);
    if (!in) return lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!text::trim(line).empty()) lines.push_back(std::move(line));
    }
    return lines;
}

}  // namespace nqs
