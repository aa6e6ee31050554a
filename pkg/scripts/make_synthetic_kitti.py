"""Write a small KITTI-style odometry root for trying the preprocess pipeline end to end"""
import argparse
import os
import sys

# Add project root to path
sys.path.append(os.getcwd())

from posegan.core.logging import setup_logging
from posegan.services.synthetic import (
    synthetic_square_loop,
    write_synthetic_correspondences,
    write_synthetic_kitti,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", required=True, help="Output KITTI root")
    parser.add_argument("--sequences", nargs="+", default=["00", "01"])
    parser.add_argument("--side", type=int, default=10, help="Frames per edge of the square drive")
    parser.add_argument("--points", type=int, default=300, help="Stereo matches per frame (0 disables)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    setup_logging()

    poses = synthetic_square_loop(side=args.side)
    for k, seq in enumerate(args.sequences):
        write_synthetic_kitti(args.root, seq, n_frames=len(poses), seed=args.seed + k, poses=poses)
        if args.points:
            write_synthetic_correspondences(
                os.path.join(args.root, "correspondences"), seq, len(poses), args.points, seed=args.seed + k
            )
        print(f"Sequence {seq}: {len(poses)} frames")
    print(f"\nKITTI root ready at {args.root}")
    if args.points:
        print(f"Correspondences in {os.path.join(args.root, 'correspondences')}")


if __name__ == "__main__":
    main()
