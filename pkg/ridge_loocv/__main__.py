from ridge_loocv.cli import main

if __name__ == "__main__":
    main()
