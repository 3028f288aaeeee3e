#include "fesid_cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return fesid::cli::run(argc, argv, std::cout, std::cerr);
}
