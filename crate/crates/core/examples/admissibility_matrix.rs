//! Prints which (memory x search x environment) cells are defined.

use scopemem::augment::MemoryKind;
use scopemem::matrix::{check_admissible, memory_label};
use scopemem::search::SearchMethod;

fn main() {
    use MemoryKind::*;
    let rows = [vec![None], vec![RawSibling], vec![Reflection], vec![Fact], vec![Fact, Reflection]];
    let methods = [SearchMethod::BestOfN, SearchMethod::Beam, SearchMethod::Mcts];
    for serializable in [true, false] {
        println!("{} environment", if serializable { "serializable" } else { "non-serializable" });
        print!("{:<20}", "");
        for m in methods {
            print!("{:>12}", m.label());
        }
        println!();
        for memory in &rows {
            print!("{:<20}", memory_label(memory));
            for m in methods {
                let cell = match check_admissible(memory, m, serializable) {
                    Ok(()) => "ok",
                    Err(r) => r.placeholder(),
                };
                print!("{cell:>12}");
            }
            println!();
        }
        println!();
    }
}
