#include <iostream>

#include "activemargin/cli.hpp"

int main(int argc, char** argv) {
    return activemargin::run_cli(argc, argv, std::cout, std::cerr);
}
