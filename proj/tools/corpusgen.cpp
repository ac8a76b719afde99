#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "vitfill/synth.hpp"

int main(int argc, char** argv) {
    using namespace vitfill;

    CLI::App app{"Generate a synthetic PNG corpus of smooth gradient-and-blob images"};
    std::string dir;
    int count = 200;
    int size = 64;
    std::uint64_t seed = 0;
    app.add_option("dir", dir, "Output directory")->required();
    app.add_option("--count", count, "Number of images");
    app.add_option("--size", size, "Side length in pixels");
    app.add_option("--seed", seed, "Generation seed");

    try {
        app.parse(argc, argv);
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
        write_synth_corpus(dir, count, size, size, seed);
        std::cout << count << " image(s) at " << size << "x" << size << " under " << dir << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
