#pragma once

#include <functional>
#include <string>
#include <vector>

namespace mesorisk {

using WarningHandler = std::function<void(const std::string&)>;

// Non-fatal diagnostics go through here. Default handler prints to stderr.
void warn(const std::string& message);

// Replaces the process-wide handler and returns the previous one.
WarningHandler set_warning_handler(WarningHandler handler);

// Collects warnings for the lifetime of the object; restores the previous
// handler on destruction.
class WarningCapture {
public:
    WarningCapture();
    ~WarningCapture();
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }
    bool contains(const std::string& fragment) const;

private:
    std::vector<std::string> messages_;
    WarningHandler previous_;
};

}  // namespace mesorisk
