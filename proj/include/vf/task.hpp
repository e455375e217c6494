#pragma once

// Lazily started coroutine task. Simulated processes are written as ordinary
// sequential code that co_awaits fabric operations; the deterministic
// scheduler in fabric.hpp resumes them.

#include <coroutine>
#include <exception>
#include <optional>
#include <utility>

namespace vf::sim
{
    namespace detail
    {
        struct PromiseBase
        {
            std::coroutine_handle<> continuation = std::noop_coroutine();
            std::exception_ptr error;

            struct FinalAwaiter
            {
                bool await_ready() noexcept { return false; }

                template <class P>
                std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept
                {
                    return h.promise().continuation;
                }

                void await_resume() noexcept {}
            };

            std::suspend_always initial_suspend() noexcept { return {}; }
            FinalAwaiter final_suspend() noexcept { return {}; }
            void unhandled_exception() noexcept { error = std::current_exception(); }
        };
    } // namespace detail

    template <class T = void>
    class [[nodiscard]] Task
    {
    public:
        struct promise_type : detail::PromiseBase
        {
            std::optional<T> value;

            Task get_return_object() { return Task(std::coroutine_handle<promise_type>::from_promise(*this)); }

            template <class U>
            void return_value(U &&v)
            {
                value.emplace(std::forward<U>(v));
            }
        };

        Task() = default;
        Task(Task &&o) noexcept : h_(std::exchange(o.h_, {})) {}
        Task &operator=(Task &&o) noexcept
        {
            if (this != &o)
            {
                reset();
                h_ = std::exchange(o.h_, {});
            }
            return *this;
        }
        Task(const Task &) = delete;
        Task &operator=(const Task &) = delete;
        ~Task() { reset(); }

        bool await_ready() const noexcept { return false; }

        std::coroutine_handle<> await_suspend(std::coroutine_handle<> caller) noexcept
        {
            h_.promise().continuation = caller;
            return h_;
        }

        T await_resume()
        {
            auto &p = h_.promise();
            if (p.error)
                std::rethrow_exception(p.error);
            return std::move(*p.value);
        }

        std::coroutine_handle<promise_type> handle() const noexcept { return h_; }

    private:
        explicit Task(std::coroutine_handle<promise_type> h) : h_(h) {}

        void reset() noexcept
        {
            if (h_)
                h_.destroy();
            h_ = {};
        }

        std::coroutine_handle<promise_type> h_;
    };

    template <>
    class [[nodiscard]] Task<void>
    {
    public:
        struct promise_type : detail::PromiseBase
        {
            Task get_return_object() { return Task(std::coroutine_handle<promise_type>::from_promise(*this)); }
            void return_void() noexcept {}
        };

        Task() = default;
        Task(Task &&o) noexcept : h_(std::exchange(o.h_, {})) {}
        Task &operator=(Task &&o) noexcept
        {
            if (this != &o)
            {
                reset();
                h_ = std::exchange(o.h_, {});
            }
            return *this;
        }
        Task(const Task &) = delete;
        Task &operator=(const Task &) = delete;
        ~Task() { reset(); }

        bool await_ready() const noexcept { return false; }

        std::coroutine_handle<> await_suspend(std::coroutine_handle<> caller) noexcept
        {
            h_.promise().continuation = caller;
            return h_;
        }

        void await_resume()
        {
            if (h_.promise().error)
                std::rethrow_exception(h_.promise().error);
        }

        std::coroutine_handle<promise_type> handle() const noexcept { return h_; }

    private:
        explicit Task(std::coroutine_handle<promise_type> h) : h_(h) {}

        void reset() noexcept
        {
            if (h_)
                h_.destroy();
            h_ = {};
        }

        std::coroutine_handle<promise_type> h_;
    };
} // namespace vf::sim
