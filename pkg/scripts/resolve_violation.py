import logging
import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from app.core.database import SessionLocal, init_db, session_factory_for
from app.services.contract_checker import open_violations, resolve_violation

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


if __name__ == "__main__":
    print("--- Sweep Ledger Violation Resolver ---")

    # Optional ledger URL as second argument
    session_factory = session_factory_for(sys.argv[2]) if len(sys.argv) > 2 else SessionLocal
    init_db(session_factory)

    # 1. List current violations
    violations = open_violations(session_factory)

    if not violations:
        print("No open violations found.")
        sys.exit(0)

    print(f"\nFound {len(violations)} open violations:")
    print(f"{'ID':<5} {'RUN':<22} {'L':<3} {'CASE':<6} {'CONTRACT':<13} {'MESSAGE'}")
    print("-" * 80)

    for v in violations:
        print(f"{v.id:<5} {v.run_label:<22} {v.l:<3} {v.case_index:<6} {v.contract:<13} {(v.message or '')[:40]}")

    # 2. Ask user for ID
    if len(sys.argv) > 1:
        target_id = sys.argv[1]
    else:
        print("\n")
        target_id = input("Enter violation ID to resolve (or 'q' to quit): ")

    if target_id.lower() == 'q':
        sys.exit(0)

    try:
        violation_id = int(target_id)
    except ValueError:
        print("Invalid ID. Please enter a number.")
        sys.exit(1)

    sys.exit(0 if resolve_violation(violation_id, session_factory) else 1)
