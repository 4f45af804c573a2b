//! Sweeps over a worker pool. Worker `k` takes items `k, k + n, …` and
//! writes its rows to its own shard file; the merge orders rows by item index.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::{create_file, CliError};

fn shard_path(dir: &Path, stem: &str, k: usize) -> PathBuf {
    dir.join(format!("{stem}.shard{k}.csv"))
}

fn run_worker<T, F>(items: &[T], k: usize, n: usize, dir: &Path, stem: &str, f: &F) -> Result<(), CliError>
where
    F: Fn(&T) -> Result<Vec<String>, CliError>,
{
    let mut w = create_file(dir, &format!("{stem}.shard{k}.csv"))?;
    for (i, item) in items.iter().enumerate().skip(k).step_by(n) {
        for row in f(item)? {
            writeln!(w, "{i},{row}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(feature = "parallel")]
fn run_all<T, F>(items: &[T], n: usize, dir: &Path, stem: &str, f: &F) -> Result<(), CliError>
where
    T: Sync,
    F: Fn(&T) -> Result<Vec<String>, CliError> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().try_for_each(|k| run_worker(items, k, n, dir, stem, f)))
}

#[cfg(not(feature = "parallel"))]
fn run_all<T, F>(items: &[T], n: usize, dir: &Path, stem: &str, f: &F) -> Result<(), CliError>
where
    T: Sync,
    F: Fn(&T) -> Result<Vec<String>, CliError> + Sync,
{
    (0..n).try_for_each(|k| run_worker(items, k, n, dir, stem, f))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `f` on every item with `workers` shards and merges them into
/// `<stem>.csv`. Returns the number of merged rows.
pub fn sweep<T, F>(items: &[T], workers: usize, dir: &Path, stem: &str, header: &str, f: F) -> Result<usize, CliError>
where
    T: Sync,
    F: Fn(&T) -> Result<Vec<String>, CliError> + Sync,
{
    let n = workers.clamp(1, items.len().max(1));
    run_all(items, n, dir, stem, &f)?;
    let mut rows: Vec<(usize, usize, String)> = Vec::new();
    for k in 0..n {
        let path = shard_path(dir, stem, k);
        let file = std::fs::File::open(&path)?;
        for (j, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let (i, row) = line.split_once(',').ok_or_else(|| CliError::Config(format!("corrupt shard {}", path.display())))?;
            let i: usize = i.parse().map_err(|_| CliError::Config(format!("corrupt shard {}", path.display())))?;
            rows.push((i, j, row.to_string()));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut w = create_file(dir, &format!("{stem}.csv"))?;
    writeln!(w, "{header}")?;
    for (_, _, row) in &rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_is_independent_of_worker_count() {
        let items: Vec<usize> = (0..17).collect();
        let mut outputs = Vec::new();
        for workers in [1, 3, 8] {
            let dir = std::env::temp_dir().join(format!("stiction-shard-{}-{workers}", std::process::id()));
            std::fs::create_dir_all(&dir).unwrap();
            let n = sweep(&items, workers, &dir, "s", "i,sq", |&i| Ok(vec![format!("{i},{}", i * i)])).unwrap();
            assert_eq!(n, 17);
            outputs.push(std::fs::read_to_string(dir.join("s.csv")).unwrap());
            std::fs::remove_dir_all(&dir).unwrap();
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    }
}
