#include <iostream>

#include "egcnn/cli.hpp"

int main(int argc, char** argv) { return egcnn::cli::run(argc, argv, std::cout, std::cerr); }
