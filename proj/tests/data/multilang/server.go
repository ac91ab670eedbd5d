package main

type Server struct{}

func (s *Server) Start() error {
	return nil
}

func main() {
	handler := func() int {
		return 1
	}
	_ = handler
}
