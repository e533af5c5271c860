"""Print status and diagnostics from every manifest under an output root."""
import argparse
import json
import pathlib


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", nargs="?", default="out")
    args = parser.parse_args()
    for path in sorted(pathlib.Path(args.root).glob("*/manifest.json")):
        manifest = json.loads(path.read_text())
        print(f"{path.parent.name}: {manifest['command']} {manifest['status']}")
        for key, value in sorted(manifest.get("diagnostics", {}).items()):
            print(f"    {key} = {value}")
        if manifest["status"] != "ok":
            print(f"    error = {manifest.get('error')}")


if __name__ == "__main__":
    main()
