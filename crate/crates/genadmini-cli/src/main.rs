fn main() {
    println!("genadmini");
}
