from dotenv import load_dotenv

from soundbounce.cli import main

# Load environment variables
load_dotenv()


if __name__ == "__main__":
    main()
