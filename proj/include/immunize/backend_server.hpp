#pragma once

#include <memory>
#include <thread>

#include "immunize/backend.hpp"

namespace immunize {

/// Serves any local EditingBackend over the adapter wire protocol
/// (POST /features, /grad, /edit). This is the reference implementation of
/// the server side, used to stand in for an out-of-process editor.
/// With enable_grad = false the server answers /grad with 501, modelling an
/// edit-only adapter.
class BackendServer {
public:
    BackendServer(const EditingBackend& backend, bool enable_grad = true);
    ~BackendServer();

    BackendServer(const BackendServer&) = delete;
    BackendServer& operator=(const BackendServer&) = delete;

    /// Binds 127.0.0.1 on an ephemeral port and starts serving on a
    /// background thread. Returns the bound port.
    int start();
    void stop();

    std::string base_url() const;

private:
    const EditingBackend& backend_;
    bool enable_grad_;
    int port_ = 0;
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread serve_thread_;
};

}  // namespace immunize
