from setuptools import setup, find_packages
import os

# Read README with proper encoding handling
def read_readme():
    """Read README.md as UTF-8, falling back to a one-line description."""
    readme_path = os.path.join(os.path.dirname(__file__), 'README.md')
    try:
        with open(readme_path, 'r', encoding='utf-8') as f:
            return f.read()
    except (FileNotFoundError, UnicodeDecodeError):
        return "Susceptibility function of postcritically finite unimodal maps."

setup(
    name="unimodal_response",
    version="1.0.0",
    packages=find_packages(exclude=["examples", "examples.*"]),
    install_requires=[
        'numpy>=1.24.0',
        'scipy>=1.10.0',
        'mpmath>=1.3.0',
        'python-dotenv>=1.0.0',
        'psutil>=5.9.0',
    ],
    extras_require={
        'dev': ['pytest>=7.0.0'],
    },
    entry_points={
        'console_scripts': [
            'unimodal-response=unimodal_response.main:main',
        ],
    },
    description="Linear response (susceptibility) of postcritically finite unimodal maps via transfer operators",
    long_description=read_readme(),
    long_description_content_type='text/markdown',
    classifiers=[
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8',
)
