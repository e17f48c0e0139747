#!/usr/bin/env python
"""vpsnet command line: python manage.py {gen_data,train,infer,eval,overlay,check,ablate} ..."""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install requirements.txt before running the vpsnet commands."
        ) from exc
    if len(sys.argv) == 1:
        sys.argv.append('help')
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
